#pragma once

// Video sources: a deterministic synthetic moving-texture generator and a
// loader for <root>/<sequence>/<frame>.<ext> folders.

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace rvjscc {

struct VideoSequence {
    torch::Tensor frames;  // (T, 3, H, W) float32 in [0, 1]
    std::string source_id;
    double fps = 25.0;     // informational
    int dropped = 0;       // trailing frames that did not fill a GoP

    int64_t length() const { return frames.size(0); }
    /// Number of complete GoPs after the bootstrap frame.
    int64_t gop_count(int gop_len) const { return (length() - 1) / gop_len; }
};

/// Frames kept from a sequence of n frames: the bootstrap frame plus whole GoPs.
int usable_frames(int n, int gop_len);

/// Translating and rotating colored gratings plus drifting blobs, with
/// sub-pixel motion between consecutive frames.
VideoSequence synth_video(uint64_t seed, int n_frames, int frame_size);

struct LoadOptions {
    int frame_stride = 1;  // keep every k-th frame
    int crop_size = 0;     // centered square crop in source pixels; 0 = largest square
};

/// Loads every sequence subfolder in lexicographic order. Frames are read in
/// lexicographic filename order, center-cropped to a square and resized to
/// frame_size. Unreadable files are skipped with a warning; sequences shorter
/// than gop_len + 1 frames are skipped. Throws when nothing loads.
std::vector<VideoSequence> load_dataset(const std::string& root, int frame_size, int gop_len,
                                        const LoadOptions& opts = {});

}  // namespace rvjscc
