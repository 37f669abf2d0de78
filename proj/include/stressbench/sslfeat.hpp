#pragma once

// Import of frame-level self-supervised speech representations and their
// syllable-level averaging.
//
// SBFR layout (little-endian):
//   "SBFR" | version u16 | dim u16 | hop_ms u16 | frame count u64
//   | frames x dim f32 (row-major)
//   | optional trailer: provenance (u16 len + UTF-8 bytes)
// Frame i is centered at (i + 0.5) * hop_ms.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stressbench/corpus.hpp"
#include "stressbench/featfile.hpp"

namespace stressbench::ssl {

constexpr std::uint16_t kFrameFileVersion = 1;
constexpr std::size_t kDefaultDim = 768;
constexpr std::uint16_t kDefaultHopMs = 20;

struct FrameFeatureFile {
  std::string utt_id;
  std::size_t dim = kDefaultDim;
  std::uint16_t hop_ms = kDefaultHopMs;
  std::size_t frames = 0;
  std::vector<double> data;  // frames x dim
  std::string provenance;    // e.g. model name and layer

  const double* frame(std::size_t i) const { return data.data() + i * dim; }
  double frame_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * hop_ms / 1000.0; }
};

std::vector<std::uint8_t> encode(const FrameFeatureFile& f);
FrameFeatureFile decode(const std::vector<std::uint8_t>& bytes, const std::string& name);
// utt_id is taken from the file stem.
FrameFeatureFile load_frame_features(const std::filesystem::path& path);
void save_frame_features(const FrameFeatureFile& f, const std::filesystem::path& path);

// Frames whose centers fall in [start, end); if none, the single frame nearest
// the span's midpoint. Throws if the span lies wholly outside the timeline.
std::vector<std::size_t> select_frames(const FrameFeatureFile& f, double start, double end);

std::vector<double> aggregate(const FrameFeatureFile& f, double start, double end);

struct Extraction {
  features::FeatureTable table;
  std::vector<std::string> failures;
  std::size_t skipped = 0;
};

std::vector<std::string> ssl_columns(std::size_t dim);

// Reads <frames_dir>/<utt_id>.sbfr for each utterance.
Extraction feature_table(const std::vector<corpus::Utterance>& utterances,
                         const std::filesystem::path& frames_dir);

}  // namespace stressbench::ssl
