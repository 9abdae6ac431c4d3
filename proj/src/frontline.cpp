#include "gfk/frontline.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace gfk {
namespace {

constexpr int kDx4[4] = {1, -1, 0, 0};
constexpr int kDy4[4] = {0, 0, 1, -1};
// 8-neighborhood scan order for tracing: E, SE, S, SW, W, NW, N, NE
constexpr int kDx8[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy8[8] = {0, 1, 1, 1, 0, -1, -1, -1};

void check_mask(const ZoneMask& mask, const char* op) {
    if (mask.width < 1 || mask.height < 1 || mask.labels.size() != static_cast<size_t>(mask.pixels()))
        throw std::invalid_argument(std::string(op) + ": empty or inconsistent mask");
    for (uint8_t v : mask.labels)
        if (v >= kZoneClasses) throw std::invalid_argument(std::string(op) + ": label out of range");
    if (mask.resolution_m_per_px <= 0.0)
        throw std::invalid_argument(std::string(op) + ": resolution must be positive");
}

// 4-connected flood fill of `cls` starting at seed; returns member indices.
std::vector<int64_t> flood_component(const ZoneMask& mask, std::vector<uint8_t>& visited, int sy, int sx) {
    const uint8_t cls = mask.at(sy, sx);
    std::vector<int64_t> members;
    std::queue<std::pair<int, int>> frontier;
    frontier.push({sy, sx});
    visited[static_cast<size_t>(sy) * mask.width + sx] = 1;
    while (!frontier.empty()) {
        auto [y, x] = frontier.front();
        frontier.pop();
        members.push_back(static_cast<int64_t>(y) * mask.width + x);
        for (int k = 0; k < 4; ++k) {
            const int ny = y + kDy4[k], nx = x + kDx4[k];
            if (ny < 0 || ny >= mask.height || nx < 0 || nx >= mask.width) continue;
            const size_t ni = static_cast<size_t>(ny) * mask.width + nx;
            if (visited[ni] || mask.labels[ni] != cls) continue;
            visited[ni] = 1;
            frontier.push({ny, nx});
        }
    }
    return members;
}

}  // namespace

std::vector<uint8_t> fill_holes(const std::vector<uint8_t>& foreground, int width, int height) {
    if (static_cast<size_t>(width) * height != foreground.size())
        throw std::invalid_argument("fill_holes: size mismatch");
    std::vector<uint8_t> reached(foreground.size(), 0);
    std::queue<std::pair<int, int>> frontier;
    auto seed = [&](int y, int x) {
        const size_t i = static_cast<size_t>(y) * width + x;
        if (!foreground[i] && !reached[i]) {
            reached[i] = 1;
            frontier.push({y, x});
        }
    };
    for (int x = 0; x < width; ++x) {
        seed(0, x);
        seed(height - 1, x);
    }
    for (int y = 0; y < height; ++y) {
        seed(y, 0);
        seed(y, width - 1);
    }
    while (!frontier.empty()) {
        auto [y, x] = frontier.front();
        frontier.pop();
        for (int k = 0; k < 4; ++k) {
            const int ny = y + kDy4[k], nx = x + kDx4[k];
            if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
            const size_t ni = static_cast<size_t>(ny) * width + nx;
            if (reached[ni] || foreground[ni]) continue;
            reached[ni] = 1;
            frontier.push({ny, nx});
        }
    }
    std::vector<uint8_t> out(foreground.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = foreground[i] || !reached[i] ? 1 : 0;
    return out;
}

double polyline_length_px(const std::vector<FrontPoint>& line) {
    double total = 0.0;
    for (size_t i = 1; i < line.size(); ++i) {
        const int dx = std::abs(line[i][0] - line[i - 1][0]);
        const int dy = std::abs(line[i][1] - line[i - 1][1]);
        total += (dx == 1 && dy == 1) ? std::sqrt(2.0) : 1.0;
    }
    return total;
}

FrontSet extract_front(const ZoneMask& mask, const ZoneMask* rock_mask, double min_front_m) {
    check_mask(mask, "extract_front");
    const int W = mask.width, H = mask.height;
    ZoneMask work = mask;
    if (rock_mask != nullptr) {
        check_mask(*rock_mask, "extract_front(rock)");
        if (rock_mask->width != W || rock_mask->height != H)
            throw std::invalid_argument("extract_front: rock mask dimensions differ from mask");
        for (int64_t i = 0; i < work.pixels(); ++i)
            if (rock_mask->labels[static_cast<size_t>(i)] == kZoneRock) work.labels[static_cast<size_t>(i)] = kZoneRock;
    }

    FrontSet fronts;
    fronts.resolution_m_per_px = work.resolution_m_per_px;

    // largest 4-connected OIM component; scan order breaks size ties by the
    // smallest top-left (row-major) pixel index
    std::vector<uint8_t> visited(static_cast<size_t>(work.pixels()), 0);
    std::vector<int64_t> largest;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y) * W + x;
            if (visited[i] || work.labels[i] != kZoneOim) continue;
            auto comp = flood_component(work, visited, y, x);
            if (comp.size() > largest.size()) largest = std::move(comp);
        }
    }
    if (largest.empty()) return fronts;  // no ocean/ice-melange pixels: empty-front image

    std::vector<uint8_t> keep(static_cast<size_t>(work.pixels()), 0);
    for (int64_t i : largest) keep[static_cast<size_t>(i)] = 1;
    for (int64_t i = 0; i < work.pixels(); ++i)
        if (work.labels[static_cast<size_t>(i)] == kZoneOim && !keep[static_cast<size_t>(i)])
            work.labels[static_cast<size_t>(i)] = kZoneGlacier;

    // fill interior holes of the surviving component
    std::vector<uint8_t> filled = fill_holes(keep, W, H);
    for (int64_t i = 0; i < work.pixels(); ++i)
        if (filled[static_cast<size_t>(i)]) work.labels[static_cast<size_t>(i)] = kZoneOim;

    // boundary: OIM pixels 4-adjacent to glacier
    std::vector<uint8_t> boundary(static_cast<size_t>(work.pixels()), 0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (work.at(y, x) != kZoneOim) continue;
            for (int k = 0; k < 4; ++k) {
                const int ny = y + kDy4[k], nx = x + kDx4[k];
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                if (work.at(ny, nx) == kZoneGlacier) {
                    boundary[static_cast<size_t>(y) * W + x] = 1;
                    break;
                }
            }
        }
    }

    // trace 8-connected boundary pixels into polylines; prefer starting at
    // pixels with one boundary neighbor (curve endpoints)
    auto degree = [&](int y, int x) {
        int d = 0;
        for (int k = 0; k < 8; ++k) {
            const int ny = y + kDy8[k], nx = x + kDx8[k];
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            if (boundary[static_cast<size_t>(ny) * W + nx]) ++d;
        }
        return d;
    };
    std::vector<uint8_t> traced(static_cast<size_t>(work.pixels()), 0);
    std::vector<size_t> stranded;
    for (int pass = 0; pass < 2; ++pass) {
        for (int y0 = 0; y0 < H; ++y0) {
            for (int x0 = 0; x0 < W; ++x0) {
                const size_t i0 = static_cast<size_t>(y0) * W + x0;
                if (!boundary[i0] || traced[i0]) continue;
                if (pass == 0 && degree(y0, x0) > 1) continue;  // first pass: endpoints only
                std::vector<FrontPoint> line;
                int y = y0, x = x0;
                traced[i0] = 1;
                line.push_back({x, y});
                for (;;) {
                    bool moved = false;
                    // prefer axis moves so staircase borders trace cleanly
                    for (int k : {0, 2, 4, 6, 1, 3, 5, 7}) {
                        const int ny = y + kDy8[k], nx = x + kDx8[k];
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        const size_t ni = static_cast<size_t>(ny) * W + nx;
                        if (!boundary[ni] || traced[ni]) continue;
                        traced[ni] = 1;
                        line.push_back({nx, ny});
                        y = ny;
                        x = nx;
                        moved = true;
                        break;
                    }
                    if (!moved) break;
                }
                if (line.size() >= 2)
                    fronts.polylines.push_back(std::move(line));
                else
                    stranded.push_back(i0);
            }
        }
    }
    // a walk that stalled immediately sits next to an already traced curve;
    // attach it as a two-point segment so no border pixel is lost (pixels with
    // no boundary neighbor at all cannot form a polyline and are dropped)
    for (size_t i : stranded) {
        const int y = static_cast<int>(i) / W, x = static_cast<int>(i) % W;
        for (int k : {0, 2, 4, 6, 1, 3, 5, 7}) {
            const int ny = y + kDy8[k], nx = x + kDx8[k];
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            if (boundary[static_cast<size_t>(ny) * W + nx]) {
                fronts.polylines.push_back({{nx, ny}, {x, y}});
                break;
            }
        }
    }

    // delete fronts shorter than the benchmark threshold
    std::vector<std::vector<FrontPoint>> kept;
    for (auto& line : fronts.polylines)
        if (polyline_length_px(line) * work.resolution_m_per_px >= min_front_m) kept.push_back(std::move(line));
    fronts.polylines = std::move(kept);
    return fronts;
}

std::string frontset_to_json(const FrontSet& fronts) {
    nlohmann::json j;
    j["resolution_m_per_px"] = fronts.resolution_m_per_px;
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& line : fronts.polylines) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : line) pts.push_back({p[0], p[1]});
        lines.push_back(std::move(pts));
    }
    j["fronts"] = std::move(lines);
    return j.dump();
}

FrontSet frontset_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FrontSet out;
    out.resolution_m_per_px = j.at("resolution_m_per_px").get<double>();
    for (const auto& line : j.at("fronts")) {
        std::vector<FrontPoint> pts;
        for (const auto& p : line) pts.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        out.polylines.push_back(std::move(pts));
    }
    return out;
}

}  // namespace gfk
