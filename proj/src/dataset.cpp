#include "rvjscc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

namespace rvjscc {

namespace fs = std::filesystem;

int usable_frames(int n, int gop_len) {
    if (gop_len < 1) throw std::invalid_argument("usable_frames: gop_len must be >= 1");
    if (n < gop_len + 1) return 0;
    return 1 + ((n - 1) / gop_len) * gop_len;
}

namespace {

// Portable uniform draw from raw engine bits.
class Uniform {
public:
    explicit Uniform(uint64_t seed) : engine_(seed) {}
    double operator()(double lo, double hi) {
        return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

private:
    std::mt19937_64 engine_;
};

struct Grating {
    double kx, ky, phase, amp;
    std::array<double, 3> color;
};

struct Blob {
    double cx, cy, vx, vy, radius;
    std::array<double, 3> amp;
};

// Triangle wave folding a coordinate into [lo, hi] so blobs bounce off the border.
double bounce(double x, double lo, double hi) {
    const double span = hi - lo;
    double t = std::fmod(x - lo, 2.0 * span);
    if (t < 0) t += 2.0 * span;
    return lo + (t <= span ? t : 2.0 * span - t);
}

}  // namespace

VideoSequence synth_video(uint64_t seed, int n_frames, int frame_size) {
    if (n_frames < 1 || frame_size < 1) throw std::invalid_argument("synth_video: sizes must be positive");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    Uniform u(seed * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL);
    const double s = frame_size;

    std::array<double, 3> base{};
    for (auto& b : base) b = u(0.35, 0.65);
    std::vector<Grating> gratings(3);
    for (auto& g : gratings) {
        const double freq = u(0.03, 0.12);
        const double angle = u(0.0, std::numbers::pi);
        g.kx = two_pi * freq * std::cos(angle);
        g.ky = two_pi * freq * std::sin(angle);
        g.phase = u(0.0, two_pi);
        g.amp = u(0.06, 0.14);
        for (auto& c : g.color) c = u(-1.0, 1.0);
    }
    const double vx = u(-1.2, 1.2);
    const double vy = u(-1.2, 1.2);
    const double omega = u(-0.02, 0.02);
    std::vector<Blob> blobs(2);
    for (auto& b : blobs) {
        b.cx = u(0.2 * s, 0.8 * s);
        b.cy = u(0.2 * s, 0.8 * s);
        b.vx = u(-1.5, 1.5);
        b.vy = u(-1.5, 1.5);
        b.radius = u(0.08 * s, 0.2 * s);
        for (auto& a : b.amp) a = u(-0.35, 0.35);
    }

    const int64_t plane = static_cast<int64_t>(frame_size) * frame_size;
    std::vector<float> pixels(static_cast<size_t>(n_frames) * 3 * static_cast<size_t>(plane));
    for (int t = 0; t < n_frames; ++t) {
        const double ca = std::cos(-omega * t);
        const double sa = std::sin(-omega * t);
        std::array<std::pair<double, double>, 2> centers;
        for (size_t b = 0; b < blobs.size(); ++b) {
            centers[b] = {bounce(blobs[b].cx + blobs[b].vx * t, 0.1 * s, 0.9 * s),
                          bounce(blobs[b].cy + blobs[b].vy * t, 0.1 * s, 0.9 * s)};
        }
        for (int y = 0; y < frame_size; ++y) {
            for (int x = 0; x < frame_size; ++x) {
                const double cx = x - 0.5 * s;
                const double cy = y - 0.5 * s;
                const double px = ca * cx - sa * cy - vx * t;
                const double py = sa * cx + ca * cy - vy * t;
                std::array<double, 3> v = base;
                for (const auto& g : gratings) {
                    const double wave = g.amp * std::sin(g.kx * px + g.ky * py + g.phase);
                    for (int c = 0; c < 3; ++c) v[static_cast<size_t>(c)] += g.color[static_cast<size_t>(c)] * wave;
                }
                for (size_t b = 0; b < blobs.size(); ++b) {
                    const double dx = x - centers[b].first;
                    const double dy = y - centers[b].second;
                    const double r = blobs[b].radius;
                    const double e = std::exp(-(dx * dx + dy * dy) / (2.0 * r * r));
                    for (int c = 0; c < 3; ++c) v[static_cast<size_t>(c)] += blobs[b].amp[static_cast<size_t>(c)] * e;
                }
                for (int c = 0; c < 3; ++c) {
                    const size_t idx = (static_cast<size_t>(t) * 3 + static_cast<size_t>(c)) * static_cast<size_t>(plane) +
                                       static_cast<size_t>(y) * static_cast<size_t>(frame_size) + static_cast<size_t>(x);
                    pixels[idx] = static_cast<float>(std::clamp(v[static_cast<size_t>(c)], 0.0, 1.0));
                }
            }
        }
    }
    VideoSequence seq;
    seq.frames = torch::from_blob(pixels.data(), {n_frames, 3, frame_size, frame_size}, torch::kFloat32).clone();
    seq.source_id = "synthetic:" + std::to_string(seed);
    return seq;
}

namespace {

torch::Tensor decode_frame(const fs::path& file, int frame_size, int crop_size) {
    cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) return {};
    int side = std::min(bgr.rows, bgr.cols);
    if (crop_size > 0) side = std::min(side, crop_size);
    cv::Mat square = bgr(cv::Rect((bgr.cols - side) / 2, (bgr.rows - side) / 2, side, side));
    cv::Mat resized;
    cv::resize(square, resized, cv::Size(frame_size, frame_size), 0, 0,
               side >= frame_size ? cv::INTER_AREA : cv::INTER_LINEAR);
    cv::Mat rgb;
    cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
    cv::Mat scaled;
    rgb.convertTo(scaled, CV_32FC3, 1.0 / 255.0);
    auto hwc = torch::from_blob(scaled.data, {frame_size, frame_size, 3}, torch::kFloat32).clone();
    return hwc.permute({2, 0, 1}).contiguous();
}

}  // namespace

std::vector<VideoSequence> load_dataset(const std::string& root, int frame_size, int gop_len,
                                        const LoadOptions& opts) {
    if (frame_size < 1) throw std::invalid_argument("load_dataset: frame_size must be positive");
    if (opts.frame_stride < 1) throw std::invalid_argument("load_dataset: frame_stride must be >= 1");
    if (!fs::is_directory(root)) throw std::runtime_error("dataset root is not a directory: " + root);
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());

    std::vector<VideoSequence> sequences;
    for (const auto& dir : dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        std::vector<torch::Tensor> frames;
        int readable = 0;
        for (const auto& file : files) {
            auto frame = decode_frame(file, frame_size, opts.crop_size);
            if (!frame.defined()) {
                spdlog::warn("skipping unreadable file {}", file.string());
                continue;
            }
            if (readable++ % opts.frame_stride == 0) frames.push_back(frame);
        }
        const int n = static_cast<int>(frames.size());
        const int keep = usable_frames(n, gop_len);
        if (keep == 0) {
            spdlog::warn("skipping {}: {} frames, need at least {}", dir.string(), n, gop_len + 1);
            continue;
        }
        VideoSequence seq;
        seq.frames = torch::stack(std::vector<torch::Tensor>(frames.begin(), frames.begin() + keep));
        seq.source_id = dir.filename().string();
        seq.fps = 25.0 / opts.frame_stride;
        seq.dropped = n - keep;
        if (seq.dropped > 0) {
            spdlog::info("{}: dropped {} trailing frame(s) that do not fill a GoP", seq.source_id, seq.dropped);
        }
        sequences.push_back(std::move(seq));
    }
    if (sequences.empty()) throw std::runtime_error("no usable sequences under " + root);
    return sequences;
}

}  // namespace rvjscc
