#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qrn/data.hpp"
#include "qrn/model.hpp"

namespace qrn {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void write_f32_le(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                        static_cast<unsigned char>((bits >> 8) & 0xff),
                        static_cast<unsigned char>((bits >> 16) & 0xff),
                        static_cast<unsigned char>((bits >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline float read_f32_le(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IoError("checkpoint blob truncated");
  std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                       (static_cast<std::uint32_t>(b[1]) << 8) |
                       (static_cast<std::uint32_t>(b[2]) << 16) |
                       (static_cast<std::uint32_t>(b[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

inline std::string blob_name(const std::string& manifest_path) {
  auto slash = manifest_path.find_last_of('/');
  std::string base =
      slash == std::string::npos ? manifest_path : manifest_path.substr(slash + 1);
  return base + ".bin";
}

struct TensorEntry {
  std::string name;
  std::uint8_t rank = 1;
  std::size_t d0 = 0, d1 = 0;
  std::size_t offset = 0;  // in values, not bytes
};

}  // namespace detail

/// Manifest (text) at `path`, weights as a float32 little-endian blob at
/// `path`.bin next to it. `fingerprint` identifies the training data file.
template <class T>
void save_checkpoint(QrnModel<T>& model, const std::string& path, std::uint64_t fingerprint) {
  const std::string blob = detail::blob_name(path);
  std::ostringstream m;
  m << "qrn-checkpoint " << kCheckpointVersion << "\n";
  m << "task " << to_string(model.kind) << "\n";
  m << "fingerprint " << detail::fingerprint_hex(fingerprint) << "\n";
  m << "blob " << blob << "\n";
  if (model.dialog) m << "slots " << model.dialog->slots << "\n";
  m << "config-begin\n" << dump_config(model.cfg) << "config-end\n";
  m << "vocab-begin\n";
  for (const auto& w : model.vocab.words()) m << w << "\n";
  m << "vocab-end\n";
  if (model.dialog) {
    m << "candidates-begin\n";
    for (const auto& c : *model.dialog->candidates) m << c << "\n";
    m << "candidates-end\n";
  }
  m << "tensors-begin\n";
  std::size_t offset = 0;
  auto refs = model.parameters();
  for (const auto& ref : refs) {
    const auto& t = ref.param->value;
    if (t.shape.rank != 1 && t.shape.rank != 2)
      throw ContractError("checkpoint: unexpected tensor rank for " + ref.param->name);
    m << ref.param->name << " " << unsigned(t.shape.rank) << " " << t.shape.d0 << " "
      << (t.shape.rank == 2 ? t.shape.d1 : 0) << " " << offset << "\n";
    offset += t.size();
  }
  m << "tensors-end\n";

  std::ofstream mf(path, std::ios::trunc);
  if (!mf) throw IoError("cannot write checkpoint manifest: " + path);
  mf << m.str();
  if (!mf.flush()) throw IoError("failed writing checkpoint manifest: " + path);

  const std::string blob_path =
      path.find_last_of('/') == std::string::npos
          ? blob
          : path.substr(0, path.find_last_of('/') + 1) + blob;
  std::ofstream bf(blob_path, std::ios::trunc | std::ios::binary);
  if (!bf) throw IoError("cannot write checkpoint blob: " + blob_path);
  for (const auto& ref : refs)
    for (const T x : ref.param->value.data)
      detail::write_f32_le(bf, static_cast<float>(x));
  if (!bf.flush()) throw IoError("failed writing checkpoint blob: " + blob_path);
}

template <class T>
struct LoadedCheckpoint {
  QrnModel<T> model;
  std::uint64_t fingerprint = 0;
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream mf(path);
  if (!mf) throw IoError("cannot open checkpoint manifest: " + path);

  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(mf, line)) throw ParseError(std::string("checkpoint: missing ") + what,
                                                  lineno + 1);
    ++lineno;
    return line;
  };

  next("header");
  int version = 0;
  if (std::sscanf(line.c_str(), "qrn-checkpoint %d", &version) != 1 ||
      version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported manifest header '" + line + "'", lineno);

  TaskKind kind = TaskKind::qa;
  std::uint64_t fingerprint = 0;
  std::string blob;
  std::size_t slots = 0;
  RunConfig cfg;
  std::vector<std::string> vocab_words;
  auto candidates = std::make_shared<std::vector<std::string>>();
  std::vector<detail::TensorEntry> entries;

  while (std::getline(mf, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "task") {
      std::string k;
      ls >> k;
      kind = parse_task_kind(k);
    } else if (tag == "fingerprint") {
      std::string hex;
      ls >> hex;
      fingerprint = std::strtoull(hex.c_str(), nullptr, 16);
    } else if (tag == "blob") {
      ls >> blob;
    } else if (tag == "slots") {
      ls >> slots;
    } else if (tag == "config-begin") {
      while (next("config-end") != "config-end") {
        auto eq = line.find('=');
        if (eq == std::string::npos)
          throw ParseError("checkpoint: bad config line '" + line + "'", lineno);
        apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
      }
    } else if (tag == "vocab-begin") {
      while (next("vocab-end") != "vocab-end") vocab_words.push_back(line);
    } else if (tag == "candidates-begin") {
      while (next("candidates-end") != "candidates-end") candidates->push_back(line);
    } else if (tag == "tensors-begin") {
      while (next("tensors-end") != "tensors-end") {
        detail::TensorEntry e;
        unsigned rank = 0;
        std::istringstream ts(line);
        if (!(ts >> e.name >> rank >> e.d0 >> e.d1 >> e.offset) || rank < 1 || rank > 2)
          throw ParseError("checkpoint: bad tensor line '" + line + "'", lineno);
        e.rank = static_cast<std::uint8_t>(rank);
        entries.push_back(std::move(e));
      }
    } else {
      throw ParseError("checkpoint: unknown manifest line '" + line + "'", lineno);
    }
  }
  if (blob.empty()) throw ParseError("checkpoint: no blob reference", lineno);
  if (vocab_words.empty()) throw ParseError("checkpoint: no vocabulary", lineno);

  LoadedCheckpoint<T> out;
  out.fingerprint = fingerprint;
  auto vocab = Vocabulary::from_words(vocab_words);
  std::shared_ptr<const std::vector<std::string>> cand_ptr;
  if (!candidates->empty()) cand_ptr = candidates;
  out.model = build_model<T>(cfg, kind, std::move(vocab), cand_ptr, /*seed=*/0);
  if (out.model.dialog && slots && out.model.dialog->slots != slots)
    throw ParseError("checkpoint: slot count mismatch", lineno);

  const std::string blob_path =
      path.find_last_of('/') == std::string::npos
          ? blob
          : path.substr(0, path.find_last_of('/') + 1) + blob;
  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw IoError("cannot open checkpoint blob: " + blob_path);

  auto refs = out.model.parameters();
  if (refs.size() != entries.size())
    throw ParseError("checkpoint: expected " + std::to_string(refs.size()) +
                         " tensors, manifest lists " + std::to_string(entries.size()),
                     lineno);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& e = entries[i];
    auto& p = *refs[i].param;
    if (e.name != p.name)
      throw ParseError("checkpoint: tensor order mismatch at '" + e.name + "', expected '" +
                           p.name + "'",
                       lineno);
    const Shape want = p.value.shape;
    const Shape got = e.rank == 1 ? Shape::vec(e.d0) : Shape::mat(e.d0, e.d1);
    if (!(want == got))
      throw ParseError("checkpoint: shape mismatch for '" + e.name + "': manifest " +
                           got.str() + ", model " + want.str(),
                       lineno);
    bf.seekg(static_cast<std::streamoff>(e.offset) * 4);
    for (auto& x : p.value.data) x = static_cast<T>(detail::read_f32_le(bf));
  }
  return out;
}

}  // namespace qrn
