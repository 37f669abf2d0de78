#pragma once

// Per-syllable feature tables and their SBFT binary encoding:
//   "SBFT" | version u16 | feature_dim u16 | rows u64 | layout_hash u64
//   rows: utt_id (u16 len + bytes) | word_id (u16 len + bytes) | syll_idx u16
//         | label u8 | feature_dim x f32
// All integers little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stressbench/corpus.hpp"

namespace stressbench::features {

constexpr std::uint16_t kFeatureFileVersion = 1;

struct FeatureRow {
  corpus::SyllableKey key;
  int label = 0;  // 1 = stressed
  std::vector<double> values;
};

struct FeatureTable {
  std::size_t dim = 0;
  std::uint64_t layout_hash = 0;
  std::vector<FeatureRow> rows;
};

std::uint64_t layout_hash(const std::vector<std::string>& columns);

// Values are stored as float32; callers that need bit-identical in-memory and
// on-disk tables should round through float first (see round_to_float).
std::vector<std::uint8_t> encode(const FeatureTable& table);
FeatureTable decode(const std::vector<std::uint8_t>& bytes, const std::string& name = "features");
void write_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_table(const std::filesystem::path& path);

double round_to_float(double v);

}  // namespace stressbench::features
