#include "schedgraph/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "schedgraph/error.hpp"

namespace schedgraph {

namespace {

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  out.write(buf, 8);
}

double get_f64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw ValidationError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ParamStore& store, std::ostream& out) {
  out.put(static_cast<char>(kCheckpointVersion));
  for (const auto& [name, p] : store) {
    out << name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) put_f64(out, p.value(r, c));
  }
}

ParamStore load_checkpoint(std::istream& in) {
  const int version = in.get();
  if (version == std::char_traits<char>::eof()) throw ValidationError("checkpoint: empty file");
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  ParamStore store;
  std::string header;
  while (std::getline(in, header)) {
    if (header.empty()) continue;
    std::istringstream hs(header);
    std::string name;
    long rows = -1;
    long cols = -1;
    if (!(hs >> name >> rows >> cols) || rows < 0 || cols < 0)
      throw ValidationError("checkpoint: malformed tensor header '" + header + "'");
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) m(r, c) = get_f64(in);
    store.add(name, std::move(m));
  }
  return store;
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  save_checkpoint(store, out);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace schedgraph
