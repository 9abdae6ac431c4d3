#pragma once

// Deterministic calving-front extraction from zone masks: keep the largest
// ocean/ice-melange component, fill its interior holes, trace the border it
// shares with the glacier class, and drop fronts shorter than 750 m.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gfk {

enum ZoneClass : uint8_t { kZoneNa = 0, kZoneRock = 1, kZoneGlacier = 2, kZoneOim = 3 };
constexpr int kZoneClasses = 4;

struct ZoneMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> labels;  // row-major, values 0..3
    double resolution_m_per_px = 1.0;

    ZoneMask() = default;
    ZoneMask(int w, int h, double res) : width(w), height(h), labels(static_cast<size_t>(w) * h, 0), resolution_m_per_px(res) {}

    uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
    int64_t pixels() const { return static_cast<int64_t>(width) * height; }
};

// Pixel coordinate, x = column, y = row, origin top-left.
using FrontPoint = std::array<int, 2>;

struct FrontSet {
    std::vector<std::vector<FrontPoint>> polylines;
    double resolution_m_per_px = 1.0;

    bool empty() const { return polylines.empty(); }
    int64_t total_points() const {
        int64_t n = 0;
        for (const auto& p : polylines) n += static_cast<int64_t>(p.size());
        return n;
    }
};

constexpr double kMinFrontMeters = 750.0;

// Connectivity: 4-connected components and boundaries, 8-connected tracing.
FrontSet extract_front(const ZoneMask& mask, const ZoneMask* rock_mask = nullptr,
                       double min_front_m = kMinFrontMeters);

// Background regions not 4-connected to the image border become foreground.
std::vector<uint8_t> fill_holes(const std::vector<uint8_t>& foreground, int width, int height);

// Geodesic length: unit steps for axis moves, sqrt(2) for diagonals.
double polyline_length_px(const std::vector<FrontPoint>& line);

std::string frontset_to_json(const FrontSet& fronts);
FrontSet frontset_from_json(const std::string& text);

}  // namespace gfk
