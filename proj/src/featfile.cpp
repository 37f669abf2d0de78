#include "stressbench/featfile.hpp"

#include <cmath>

#include "stressbench/binio.hpp"

namespace stressbench::features {

std::uint64_t layout_hash(const std::vector<std::string>& columns) {
  std::string joined;
  for (const auto& c : columns) {
    joined += c;
    joined += '\n';
  }
  return binio::fnv1a64(joined);
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<std::uint8_t> encode(const FeatureTable& table) {
  if (table.dim == 0 || table.dim > 0xFFFF) throw Error("feature table: invalid dimension");
  binio::Writer w;
  w.raw("SBFT");
  w.u16(kFeatureFileVersion);
  w.u16(static_cast<std::uint16_t>(table.dim));
  w.u64(table.rows.size());
  w.u64(table.layout_hash);
  for (const auto& r : table.rows) {
    if (r.values.size() != table.dim) throw Error("feature table: row width mismatch");
    if (r.key.syll_idx < 0 || r.key.syll_idx > 0xFFFF) throw Error("feature table: syll_idx range");
    w.str16(r.key.utt_id);
    w.str16(r.key.word_id);
    w.u16(static_cast<std::uint16_t>(r.key.syll_idx));
    w.u8(static_cast<std::uint8_t>(r.label));
    for (double v : r.values) w.f32(static_cast<float>(v));
  }
  return w.bytes();
}

FeatureTable decode(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  binio::Reader r(bytes.data(), bytes.size(), name);
  if (r.raw(4, "magic") != "SBFT") throw Error(name + ": bad magic (expected SBFT)");
  const std::uint16_t version = r.u16("version");
  if (version != kFeatureFileVersion) {
    throw Error(name + ": unsupported version " + std::to_string(version));
  }
  FeatureTable t;
  t.dim = r.u16("feature_dim");
  if (t.dim == 0) throw Error(name + ": feature_dim is 0");
  const std::uint64_t count = r.u64("row count");
  t.layout_hash = r.u64("layout hash");
  // Each row is at least 2 + 2 + 2 + 1 + 4 * dim bytes.
  if (count > r.remaining() / (7 + 4 * t.dim)) throw Error(name + ": row count exceeds file size");
  t.rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureRow row;
    row.key.utt_id = r.str16("utt_id");
    row.key.word_id = r.str16("word_id");
    row.key.syll_idx = r.u16("syll_idx");
    row.label = r.u8("label");
    if (row.label > 1) throw Error(name + ": label must be 0 or 1 (row " + std::to_string(i) + ")");
    row.values.resize(t.dim);
    for (auto& v : row.values) {
      v = r.f32("feature");
      if (!std::isfinite(v)) throw Error(name + ": non-finite feature in row " + std::to_string(i));
    }
    t.rows.push_back(std::move(row));
  }
  if (r.remaining() != 0) throw Error(name + ": trailing bytes after last row");
  return t;
}

void write_table(const FeatureTable& table, const std::filesystem::path& path) {
  binio::write_file(path, encode(table));
}

FeatureTable read_table(const std::filesystem::path& path) {
  return decode(binio::read_file(path), path.string());
}

}  // namespace stressbench::features
