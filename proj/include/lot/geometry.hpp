#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace lot {

using index_t = std::int64_t;

// Half-open [begin, end) interval over token or character positions.
struct interval {
    index_t begin = 0;
    index_t end = 0;

    constexpr index_t size() const { return end - begin; }
    constexpr bool empty() const { return end <= begin; }
    constexpr bool contains(index_t i) const { return i >= begin && i < end; }

    friend constexpr bool operator==(const interval &, const interval &) = default;
};

struct image_meta {
    index_t width_px = 1;
    index_t height_px = 1;
    std::optional<std::string> image_path;

    friend bool operator==(const image_meta &, const image_meta &) = default;
};

// Continuous rectangle in pixel space, x to the right and y downwards.
struct pixel_rect {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    friend bool operator==(const pixel_rect &, const pixel_rect &) = default;
};

// Integer pixel rectangle, half-open on the right and bottom edges.
struct crop_rect {
    index_t x1 = 0;
    index_t y1 = 0;
    index_t x2 = 0;
    index_t y2 = 0;

    index_t width() const { return x2 - x1; }
    index_t height() const { return y2 - y1; }
    index_t area() const { return width() * height(); }

    friend bool operator==(const crop_rect &, const crop_rect &) = default;
};

} // namespace lot
