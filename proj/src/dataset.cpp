#include "gfk/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace gfk {
namespace {

// Dates are stored relative to this epoch.
constexpr std::chrono::year_month_day kEpoch{std::chrono::year{2020}, std::chrono::month{1}, std::chrono::day{1}};

std::vector<uint8_t> image_to_u8(const std::vector<double>& image) {
    std::vector<uint8_t> out(image.size());
    for (size_t i = 0; i < image.size(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
    return out;
}

std::vector<double> image_from_u8(const std::vector<uint8_t>& pixels) {
    std::vector<double> out(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<double>(pixels[i]) / 255.0;
    return out;
}

std::string frame_name(size_t index, const char* stem) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu.pgm", stem, index);
    return buf;
}

}  // namespace

void write_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& pixels, int maxval) {
    if (pixels.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
    os << "P5\n" << width << " " << height << "\n" << maxval << "\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: not a binary PGM: " + path);
    int maxval = 0;
    // header tokens may be separated by comments
    auto next_int = [&is, &path]() {
        for (;;) {
            int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        int v;
        if (!(is >> v)) throw std::runtime_error("read_pgm: bad header in " + path);
        return v;
    };
    width = next_int();
    height = next_int();
    maxval = next_int();
    if (maxval < 1 || maxval > 255) throw std::runtime_error("read_pgm: unsupported maxval in " + path);
    is.get();  // single whitespace after maxval
    std::vector<uint8_t> pixels(static_cast<size_t>(width) * height);
    is.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!is) throw std::runtime_error("read_pgm: truncated pixel data in " + path);
    return pixels;
}

std::string date_string_from_offset(double day_offset) {
    const auto day = std::chrono::sys_days(kEpoch) + std::chrono::days(static_cast<int64_t>(std::llround(day_offset)));
    const std::chrono::year_month_day ymd(day);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

double day_offset_from_date_string(const std::string& date) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(date.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
        throw std::runtime_error("dataset: bad date string: " + date);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw std::runtime_error("dataset: invalid date: " + date);
    return static_cast<double>((std::chrono::sys_days(ymd) - std::chrono::sys_days(kEpoch)).count());
}

void write_series(const std::string& dir, const SitsSample& sample) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["glacier_id"] = sample.glacier_id;
    manifest["resolution_m_per_px"] = sample.resolution_m_per_px;
    nlohmann::json frames = nlohmann::json::array();
    for (size_t t = 0; t < sample.frames.size(); ++t) {
        const auto& frame = sample.frames[t];
        const std::string image_name = frame_name(t, "frame");
        const std::string mask_name = frame_name(t, "mask");
        write_pgm((fs::path(dir) / image_name).string(), sample.side, sample.side, image_to_u8(frame.image));
        write_pgm((fs::path(dir) / mask_name).string(), frame.mask.width, frame.mask.height, frame.mask.labels, 3);
        frames.push_back({{"date", date_string_from_offset(frame.date)}, {"image", image_name}, {"mask", mask_name}});
    }
    manifest["frames"] = std::move(frames);
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw std::runtime_error("write_series: cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

SitsSample read_series(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("read_series: missing manifest.json in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(is);

    SitsSample sample;
    sample.glacier_id = manifest.at("glacier_id").get<std::string>();
    sample.resolution_m_per_px = manifest.at("resolution_m_per_px").get<double>();
    double first_offset = 0.0;
    bool first = true;
    for (const auto& entry : manifest.at("frames")) {
        SitsFrame frame;
        int w = 0, h = 0;
        auto pixels = read_pgm((fs::path(dir) / entry.at("image").get<std::string>()).string(), w, h);
        frame.image = image_from_u8(pixels);
        int mw = 0, mh = 0;
        auto labels = read_pgm((fs::path(dir) / entry.at("mask").get<std::string>()).string(), mw, mh);
        if (mw != w || mh != h) throw std::runtime_error("read_series: image/mask size mismatch in " + dir);
        for (uint8_t v : labels)
            if (v >= kZoneClasses) throw std::runtime_error("read_series: mask label out of range in " + dir);
        frame.mask = ZoneMask(mw, mh, sample.resolution_m_per_px);
        frame.mask.labels = std::move(labels);
        const double offset = day_offset_from_date_string(entry.at("date").get<std::string>());
        if (first) {
            first_offset = offset;
            first = false;
        }
        frame.date = offset - first_offset;
        if (sample.side == 0) sample.side = w;
        if (w != sample.side || h != sample.side)
            throw std::runtime_error("read_series: inconsistent frame sizes in " + dir);
        sample.frames.push_back(std::move(frame));
    }
    for (size_t t = 1; t < sample.frames.size(); ++t)
        if (sample.frames[t].date <= sample.frames[t - 1].date)
            throw std::runtime_error("read_series: dates must be strictly increasing in " + dir);
    return sample;
}

void write_dataset(const std::string& root, const std::vector<SitsSample>& samples) {
    fs::create_directories(root);
    for (size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "series_%04zu", i);
        write_series((fs::path(root) / name).string(), samples[i]);
    }
}

std::vector<SitsSample> read_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw std::runtime_error("read_dataset: not a directory: " + root);
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && entry.path().filename().string().rfind("series_", 0) == 0)
            dirs.push_back(entry.path().string());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<SitsSample> samples;
    for (const auto& dir : dirs) samples.push_back(read_series(dir));
    if (samples.empty()) throw std::runtime_error("read_dataset: no series_* directories under " + root);
    return samples;
}

std::vector<uint8_t> render_mask(const ZoneMask& mask) {
    static const uint8_t palette[kZoneClasses] = {0, 85, 170, 255};
    std::vector<uint8_t> out(mask.labels.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = palette[mask.labels[i]];
    return out;
}

}  // namespace gfk
