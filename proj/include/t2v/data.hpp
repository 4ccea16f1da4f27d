#pragma once

#include <string>

#include "t2v/codec.hpp"

namespace t2v {

enum class ShapeKind { square, circle, triangle };
enum class ColorName { red, green, blue, yellow };
enum class Direction { left, right, up, down };

const char* to_string(ShapeKind s);
const char* to_string(ColorName c);
const char* to_string(Direction d);

struct ClipSpec {
    ShapeKind shape = ShapeKind::square;
    ColorName color = ColorName::red;
    Direction direction = Direction::right;
    float speed = 2.0f;  // pixels per frame
    size_t frames = 8;
    size_t height = 32;
    size_t width = 32;
    uint64_t seed = 0;
};

struct CaptionedClip {
    VideoClip clip;
    std::string caption;  // "a {color} {shape} moving {direction}"
};

// anti-aliased shape translated over a dark background; deterministic in spec
CaptionedClip generate_clip(const ClipSpec& spec);

ClipSpec random_clip_spec(Rng& rng, size_t frames, size_t height, size_t width);

// brightness-weighted centroid of frame f, (x, y) in pixels
void frame_centroid(const VideoClip& clip, size_t f, double& cx, double& cy);

}  // namespace t2v
