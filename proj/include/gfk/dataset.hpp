#pragma once

// On-disk layout: one directory per series holding frame_####.pgm (8-bit P5),
// mask_####.pgm (P5, values 0-3) and manifest.json with glacier id,
// resolution, and per-frame dates.

#include <string>
#include <vector>

#include "gfk/synth.hpp"

namespace gfk {

void write_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& pixels, int maxval = 255);
std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height);

// "YYYY-MM-DD" <-> day offset against a fixed epoch.
std::string date_string_from_offset(double day_offset);
double day_offset_from_date_string(const std::string& date);

void write_series(const std::string& dir, const SitsSample& sample);
SitsSample read_series(const std::string& dir);

// Writes series_0000, series_0001, ... under root.
void write_dataset(const std::string& root, const std::vector<SitsSample>& samples);
// Reads every series_* subdirectory of root, sorted by name.
std::vector<SitsSample> read_dataset(const std::string& root);

// Inspection rendering: NA 0, rock 85, glacier 170, OIM 255.
std::vector<uint8_t> render_mask(const ZoneMask& mask);

}  // namespace gfk
