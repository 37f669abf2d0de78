#include "stressbench/sslfeat.hpp"

#include <cmath>
#include <limits>

#include "stressbench/binio.hpp"
#include "stressbench/kernels.hpp"
#include "stressbench/parallel.hpp"

namespace stressbench::ssl {

std::vector<std::uint8_t> encode(const FrameFeatureFile& f) {
  if (f.dim == 0 || f.dim > 0xFFFF) throw Error("SBFR: invalid dimension");
  if (f.data.size() != f.frames * f.dim) throw Error("SBFR: data size does not match frames x dim");
  binio::Writer w;
  w.raw("SBFR");
  w.u16(kFrameFileVersion);
  w.u16(static_cast<std::uint16_t>(f.dim));
  w.u16(f.hop_ms);
  w.u64(f.frames);
  for (double v : f.data) w.f32(static_cast<float>(v));
  if (!f.provenance.empty()) w.str16(f.provenance);
  return w.bytes();
}

FrameFeatureFile decode(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  binio::Reader r(bytes.data(), bytes.size(), name);
  if (r.raw(4, "magic") != "SBFR") throw Error(name + ": bad magic (expected SBFR)");
  const std::uint16_t version = r.u16("version");
  if (version != kFrameFileVersion) throw Error(name + ": unsupported version " + std::to_string(version));
  FrameFeatureFile f;
  f.dim = r.u16("dim");
  if (f.dim == 0) throw Error(name + ": header field 'dim' is 0");
  f.hop_ms = r.u16("hop_ms");
  if (f.hop_ms == 0) throw Error(name + ": header field 'hop_ms' is 0");
  const std::uint64_t frames = r.u64("frame count");
  if (frames == 0) throw Error(name + ": header field 'frame count' is 0");
  if (frames > r.remaining() / (4 * f.dim)) {
    throw Error(name + ": header field 'frame count' exceeds the file size");
  }
  f.frames = frames;
  f.data.resize(f.frames * f.dim);
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const float v = r.f32("feature");
    if (!std::isfinite(v)) {
      throw Error(name + ": non-finite value at frame " + std::to_string(i / f.dim) + ", dim " +
                  std::to_string(i % f.dim));
    }
    f.data[i] = v;
  }
  if (r.remaining() > 0) f.provenance = r.str16("provenance");
  if (r.remaining() > 0) throw Error(name + ": trailing bytes after provenance");
  return f;
}

FrameFeatureFile load_frame_features(const std::filesystem::path& path) {
  auto f = decode(binio::read_file(path), path.string());
  f.utt_id = path.stem().string();
  return f;
}

void save_frame_features(const FrameFeatureFile& f, const std::filesystem::path& path) {
  binio::write_file(path, encode(f));
}

std::vector<std::size_t> select_frames(const FrameFeatureFile& f, double start, double end) {
  if (!(end > start)) throw Error("aggregate: empty syllable span");
  const double timeline_end = static_cast<double>(f.frames) * f.hop_ms / 1000.0;
  if (end <= 0.0 || start >= timeline_end) {
    throw Error("aggregate: span [" + binio::format_double(start) + ", " +
                binio::format_double(end) + ") lies outside the feature timeline");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < f.frames; ++i) {
    const double c = f.frame_center(i);
    if (c >= start && c < end) idx.push_back(i);
  }
  if (idx.empty()) {
    const double mid = 0.5 * (start + end);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.frames; ++i) {
      const double d = std::abs(f.frame_center(i) - mid);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    idx.push_back(best);
  }
  return idx;
}

std::vector<double> aggregate(const FrameFeatureFile& f, double start, double end) {
  const auto idx = select_frames(f, start, end);
  std::vector<double> mean(f.dim, 0.0);
  for (auto i : idx) kernels::axpy(1.0, f.frame(i), mean.data(), f.dim);
  for (auto& v : mean) v /= static_cast<double>(idx.size());
  return mean;
}

std::vector<std::string> ssl_columns(std::size_t dim) {
  std::vector<std::string> cols;
  cols.reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) cols.push_back("ssl_" + std::to_string(i));
  return cols;
}

Extraction feature_table(const std::vector<corpus::Utterance>& utterances,
                         const std::filesystem::path& frames_dir) {
  struct Slot {
    std::vector<features::FeatureRow> rows;
    std::vector<std::string> failures;
    std::size_t skipped = 0;
    std::size_t dim = 0;
  };
  std::vector<Slot> slots(utterances.size());
  parallel_for(utterances.size(), [&](std::size_t ui) {
    const auto& u = utterances[ui];
    auto& slot = slots[ui];
    FrameFeatureFile frames;
    try {
      frames = load_frame_features(frames_dir / (u.id + ".sbfr"));
    } catch (const std::exception& e) {
      slot.failures.push_back(u.id + ": " + e.what());
      for (const auto& w : u.words) slot.skipped += w.syllables.size();
      return;
    }
    slot.dim = frames.dim;
    for (const auto& w : u.words) {
      for (const auto& s : w.syllables) {
        const corpus::SyllableKey key{u.id, w.id, s.index};
        try {
          features::FeatureRow row;
          row.key = key;
          row.label = s.stress == corpus::Stress::stressed ? 1 : 0;
          row.values = aggregate(frames, s.start, s.end);
          for (auto& v : row.values) v = features::round_to_float(v);
          slot.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
          slot.failures.push_back(corpus::to_string(key) + ": " + e.what());
          ++slot.skipped;
        }
      }
    }
  });
  Extraction out;
  for (auto& s : slots) {
    if (s.dim != 0) {
      if (out.table.dim == 0) out.table.dim = s.dim;
      if (s.dim != out.table.dim) {
        throw Error("frame feature files disagree on dimension (" + std::to_string(s.dim) +
                    " vs " + std::to_string(out.table.dim) + ")");
      }
    }
    for (auto& r : s.rows) out.table.rows.push_back(std::move(r));
    for (auto& f : s.failures) out.failures.push_back(std::move(f));
    out.skipped += s.skipped;
  }
  if (out.table.dim == 0) out.table.dim = kDefaultDim;
  out.table.layout_hash = features::layout_hash(ssl_columns(out.table.dim));
  return out;
}

}  // namespace stressbench::ssl
