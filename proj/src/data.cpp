#include "t2v/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace t2v {

const char* to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::square: return "square";
        case ShapeKind::circle: return "circle";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* to_string(ColorName c) {
    switch (c) {
        case ColorName::red: return "red";
        case ColorName::green: return "green";
        case ColorName::blue: return "blue";
        case ColorName::yellow: return "yellow";
    }
    return "?";
}

const char* to_string(Direction d) {
    switch (d) {
        case Direction::left: return "left";
        case Direction::right: return "right";
        case Direction::up: return "up";
        case Direction::down: return "down";
    }
    return "?";
}

namespace {

void rgb_of(ColorName c, float& r, float& g, float& b) {
    switch (c) {
        case ColorName::red: r = 0.90f; g = 0.15f; b = 0.15f; return;
        case ColorName::green: r = 0.15f; g = 0.80f; b = 0.20f; return;
        case ColorName::blue: r = 0.20f; g = 0.30f; b = 0.90f; return;
        case ColorName::yellow: r = 0.90f; g = 0.85f; b = 0.20f; return;
    }
}

// inside-test in shape-local coordinates, half-extent r
bool inside(ShapeKind kind, double dx, double dy, double r) {
    switch (kind) {
        case ShapeKind::square:
            return std::abs(dx) <= r && std::abs(dy) <= r;
        case ShapeKind::circle:
            return dx * dx + dy * dy <= r * r;
        case ShapeKind::triangle: {
            // apex up: y from -r (top) to +r (base); width grows linearly
            if (dy < -r || dy > r) return false;
            double half_w = (dy + r) / (2.0 * r) * r;
            return std::abs(dx) <= half_w;
        }
    }
    return false;
}

}  // namespace

CaptionedClip generate_clip(const ClipSpec& spec) {
    size_t F = spec.frames, H = spec.height, W = spec.width;
    if (F < 1) throw std::invalid_argument("generate_clip: F must be >= 1");
    Rng rng(spec.seed);

    double r = 0.14 * double(std::min(H, W)) * (1.0 + 0.4 * rng.next_uniform());
    if (2.0 * r + 2.0 >= double(std::min(H, W)))
        throw std::invalid_argument("generate_clip: shape larger than frame");

    float cr, cg, cb;
    rgb_of(spec.color, cr, cg, cb);
    float bg = 0.06f + 0.04f * float(rng.next_uniform());

    double dxs = 0, dys = 0;
    switch (spec.direction) {
        case Direction::left: dxs = -spec.speed; break;
        case Direction::right: dxs = spec.speed; break;
        case Direction::up: dys = -spec.speed; break;   // y axis points down
        case Direction::down: dys = spec.speed; break;
    }

    // start so the trajectory is centered; jitter the transverse coordinate
    double travel = spec.speed * double(F - 1);
    double cx = double(W) / 2.0 - dxs / (spec.speed == 0 ? 1 : spec.speed) * travel / 2.0;
    double cy = double(H) / 2.0 - dys / (spec.speed == 0 ? 1 : spec.speed) * travel / 2.0;
    double jitter = (rng.next_uniform() - 0.5) * 0.2 * double(std::min(H, W));
    if (dxs != 0) cy += jitter; else cx += jitter;

    double lo_x = r + 1.0, hi_x = double(W) - r - 2.0;
    double lo_y = r + 1.0, hi_y = double(H) - r - 2.0;

    std::vector<float> px(F * H * W * 3);
    const int ss = 4;  // supersampling per axis
    for (size_t f = 0; f < F; ++f) {
        double sx = std::clamp(cx + dxs * double(f), lo_x, hi_x);
        double sy = std::clamp(cy + dys * double(f), lo_y, hi_y);
        for (size_t y = 0; y < H; ++y)
            for (size_t x = 0; x < W; ++x) {
                int hit = 0;
                for (int a = 0; a < ss; ++a)
                    for (int b = 0; b < ss; ++b) {
                        double py = double(y) + (double(a) + 0.5) / ss;
                        double pxx = double(x) + (double(b) + 0.5) / ss;
                        if (inside(spec.shape, pxx - sx, py - sy, r)) ++hit;
                    }
                float cov = float(hit) / float(ss * ss);
                size_t base = ((f * H + y) * W + x) * 3;
                px[base + 0] = bg + cov * (cr - bg);
                px[base + 1] = bg + cov * (cg - bg);
                px[base + 2] = bg + cov * (cb - bg);
            }
    }

    CaptionedClip out;
    out.clip = VideoClip(Tensor::from_data({F, H, W, 3}, std::move(px)));
    out.caption = std::string("a ") + to_string(spec.color) + " " + to_string(spec.shape) +
                  " moving " + to_string(spec.direction);
    return out;
}

ClipSpec random_clip_spec(Rng& rng, size_t frames, size_t height, size_t width) {
    ClipSpec s;
    s.shape = ShapeKind(rng.next_below(3));
    s.color = ColorName(rng.next_below(4));
    s.direction = Direction(rng.next_below(4));
    s.speed = 1.0f + float(rng.next_below(3));  // 1..3 px/frame
    s.frames = frames;
    s.height = height;
    s.width = width;
    s.seed = rng.next_u64();
    return s;
}

void frame_centroid(const VideoClip& clip, size_t f, double& cx, double& cy) {
    size_t H = clip.height(), W = clip.width();
    const auto& d = clip.pixels.values();
    // estimate background as the minimum luminance, weight mass above it
    double bg = 1e9;
    for (size_t i = 0; i < H * W; ++i) {
        size_t base = (f * H * W + i) * 3;
        double lum = (d[base] + d[base + 1] + d[base + 2]) / 3.0;
        bg = std::min(bg, lum);
    }
    double mass = 0, mx = 0, my = 0;
    for (size_t y = 0; y < H; ++y)
        for (size_t x = 0; x < W; ++x) {
            size_t base = ((f * H + y) * W + x) * 3;
            double lum = (d[base] + d[base + 1] + d[base + 2]) / 3.0 - bg;
            if (lum <= 0) continue;
            mass += lum;
            mx += lum * (double(x) + 0.5);
            my += lum * (double(y) + 0.5);
        }
    if (mass == 0) throw std::runtime_error("frame_centroid: empty frame");
    cx = mx / mass;
    cy = my / mass;
}

}  // namespace t2v
