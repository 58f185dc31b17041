#pragma once

#include <filesystem>
#include <vector>

#include "neucall/binary_io.hpp"
#include "neucall/model.hpp"

namespace neucall {

// Checkpoint layout (host little-endian):
//   "NMDL" u16 version
//   hyperparameters: u8 config bits, u8 embedding mode, u64 pe width, embed dim, vocab, hidden, depth,
//                    f64 lr, dropout, beta1, beta2, eps, u64 seed
//   u8 scalar size | u32 block count | per block {str name, u64 rows, u64 cols, values}
//   Adam m, Adam v (flat arrays) | u64 step, u64 epoch | str rng state | u32 crc32
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <class T>
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<T>& p) {
  ByteWriter w;
  w.tag("NMDL");
  w.put<std::uint16_t>(kCheckpointVersion);
  const auto& s = p.shape;
  w.put<std::uint8_t>(s.config.bits());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.mode));
  for (std::uint64_t v : {s.pe_width, s.embed_dim, s.vocab_size, s.hidden, s.depth}) w.put<std::uint64_t>(v);
  for (double v : {p.hyper.lr, p.hyper.dropout, p.hyper.beta1, p.hyper.beta2, p.hyper.adam_eps}) w.put<double>(v);
  w.put<std::uint64_t>(p.hyper.seed);
  w.put<std::uint8_t>(sizeof(T));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.layout.blocks.size()));
  for (const auto& b : p.layout.blocks) {
    w.str(b.name);
    w.put<std::uint64_t>(b.rows);
    w.put<std::uint64_t>(b.cols);
    w.bytes(p.values.data() + b.offset, b.size() * sizeof(T));
  }
  w.array(p.adam_m);
  w.array(p.adam_v);
  w.put<std::uint64_t>(p.step);
  w.put<std::uint64_t>(p.epoch);
  w.str(rng_state(p.rng));
  w.seal();
  return w.data();
}

template <class T>
ModelParams<T> deserialize_checkpoint(std::vector<std::uint8_t> bytes) {
  ByteReader<CorruptCheckpoint> r(std::move(bytes));
  if (!r.has_magic("NMDL")) throw CorruptCheckpoint("bad magic");
  r.skip(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) throw VersionMismatch(version, kCheckpointVersion);
  r.verify_seal();

  ModelShape s;
  s.config = FeatureConfig::from_bits(r.get<std::uint8_t>());
  const auto mode = r.get<std::uint8_t>();
  if (mode > 1) throw CorruptCheckpoint("unknown embedding mode");
  s.mode = static_cast<EmbeddingMode>(mode);
  s.pe_width = r.get<std::uint64_t>();
  s.embed_dim = r.get<std::uint64_t>();
  s.vocab_size = r.get<std::uint64_t>();
  s.hidden = r.get<std::uint64_t>();
  s.depth = r.get<std::uint64_t>();
  Hyperparameters h;
  h.lr = r.get<double>();
  h.dropout = r.get<double>();
  h.beta1 = r.get<double>();
  h.beta2 = r.get<double>();
  h.adam_eps = r.get<double>();
  h.seed = r.get<std::uint64_t>();
  if (r.get<std::uint8_t>() != sizeof(T)) throw CorruptCheckpoint("checkpoint scalar type differs");
  // Guard the layout allocation against absurd dimensions before building it.
  if (s.hidden == 0 || s.depth == 0 || s.hidden > (1u << 16) || s.depth > 1024 || s.embed_dim > (1u << 16) ||
      s.vocab_size > (1u << 24) || s.pe_width > (1u << 16))
    throw CorruptCheckpoint("implausible model dimensions");

  ModelParams<T> p;
  try {
    p = ModelParams<T>::layout_for(s, h);
  } catch (const Error& e) {
    throw CorruptCheckpoint(e.what());
  }
  if (p.layout.total * sizeof(T) > r.remaining()) throw CorruptCheckpoint("parameter count exceeds file size");
  const auto blocks = r.get<std::uint32_t>();
  if (blocks != p.layout.blocks.size()) throw CorruptCheckpoint("parameter block count differs from hyperparameters");
  for (const auto& b : p.layout.blocks) {
    if (r.str() != b.name || r.get<std::uint64_t>() != b.rows || r.get<std::uint64_t>() != b.cols)
      throw CorruptCheckpoint("parameter block " + b.name + " does not match its declaration");
    for (std::size_t i = 0; i < b.size(); ++i) p.values[b.offset + i] = r.get<T>();
  }
  p.adam_m = r.array<T>();
  p.adam_v = r.array<T>();
  if (p.adam_m.size() != p.values.size() || p.adam_v.size() != p.values.size())
    throw CorruptCheckpoint("optimizer state size differs from parameter count");
  p.step = r.get<std::uint64_t>();
  p.epoch = r.get<std::uint64_t>();
  if (!set_rng_state(p.rng, r.str())) throw CorruptCheckpoint("bad rng state");
  r.expect_seal_next();
  return p;
}

template <class T>
void save_checkpoint(const ModelParams<T>& p, const std::filesystem::path& path) {
  write_bytes(path, serialize_checkpoint(p));
}

template <class T = float>
ModelParams<T> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<T>(read_bytes(path));
}

}  // namespace neucall
