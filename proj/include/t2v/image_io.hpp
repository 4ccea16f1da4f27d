#pragma once

#include <string>
#include <vector>

#include "t2v/codec.hpp"

namespace t2v {

// Writes frame_000.ppm ... as binary PPM (P6), maxval 255, top-left origin,
// byte = round-half-up of clamp(v,0,1)*255. Returns the written paths.
std::vector<std::string> export_frames(const VideoClip& clip, const std::string& dir,
                                       const std::string& format = "ppm");

// [H,W,3] in [0,1]
Tensor read_ppm(const std::string& path);

}  // namespace t2v
