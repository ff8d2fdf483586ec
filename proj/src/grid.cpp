#include "perhom/grid.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace perhom {

namespace {

static_assert(std::endian::native == std::endian::little, "PHF1 IO assumes a little-endian host");

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(const std::vector<unsigned char>& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw IoError("PHF1: truncated data");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= std::uint64_t(in[pos + b]) << (8 * b);
  pos += 8;
  return v;
}

double get_f64(const std::vector<unsigned char>& in, std::size_t& pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

}  // namespace

TorusGrid TorusGrid::make(int dim, int n_per_axis, double period) {
  TorusGrid g;
  g.dim = dim;
  g.n = {n_per_axis, dim == 2 ? n_per_axis : 1};
  g.period = {period, dim == 2 ? period : 1.0};
  validate(g);
  return g;
}

void validate(const TorusGrid& g) {
  require(g.dim == 1 || g.dim == 2, "grid dimension must be 1 or 2");
  for (int a = 0; a < g.dim; ++a) {
    require(g.n[a] >= 8, "grid needs at least 8 nodes per axis");
    require(std::isfinite(g.period[a]) && g.period[a] > 0.0, "grid period must be positive");
  }
}

std::size_t TorusGrid::index(int i, int j) const {
  return dim == 1 ? std::size_t(wrap(i, n[0])) : std::size_t(wrap(i, n[0])) * n[1] + wrap(j, n[1]);
}

std::size_t TorusGrid::shift(std::size_t k, int di, int dj) const {
  if (dim == 1) return index(int(k) + di);
  const auto m = multi_index(k);
  return index(m[0] + di, m[1] + dj);
}

std::array<int, 2> TorusGrid::multi_index(std::size_t k) const {
  if (dim == 1) return {int(k), 0};
  return {int(k / n[1]), int(k % n[1])};
}

Vec2 TorusGrid::coord(std::size_t k) const {
  const auto m = multi_index(k);
  Vec2 x{0.0, 0.0};
  for (int a = 0; a < dim; ++a) {
    const int j = m[a] < (n[a] + 1) / 2 ? m[a] : m[a] - n[a];
    x[a] = j * h(a);
  }
  return x;
}

double GridField::min() const { return *std::min_element(values.begin(), values.end()); }
double GridField::max() const { return *std::max_element(values.begin(), values.end()); }

double corrector_lipschitz(const GridField& f) {
  const TorusGrid& g = f.grid;
  double best = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    best = std::max(best, std::abs(f[g.shift(k, 1, 0)] - f[k]) / g.h(0));
    if (g.dim == 2) best = std::max(best, std::abs(f[g.shift(k, 0, 1)] - f[k]) / g.h(1));
  }
  return best;
}

std::vector<unsigned char> encode_phf1(const GridField& field) {
  const TorusGrid& g = field.grid;
  std::vector<unsigned char> out{'P', 'H', 'F', '1'};
  out.reserve(4 + 8 * (1 + 2 * g.dim + field.values.size()));
  put_u64(out, std::uint64_t(g.dim));
  for (int a = 0; a < g.dim; ++a) put_u64(out, std::uint64_t(g.n[a]));
  for (int a = 0; a < g.dim; ++a) put_f64(out, g.period[a]);
  for (double v : field.values) put_f64(out, v);
  return out;
}

GridField decode_phf1(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PHF1", 4) != 0) throw IoError("PHF1: bad magic");
  std::size_t pos = 4;
  const std::uint64_t d = get_u64(bytes, pos);
  if (d != 1 && d != 2) throw IoError("PHF1: unsupported dimension");
  TorusGrid g;
  g.dim = int(d);
  g.n = {1, 1};
  g.period = {1.0, 1.0};
  for (int a = 0; a < g.dim; ++a) {
    const std::uint64_t n = get_u64(bytes, pos);
    if (n < 8 || n > (1u << 24)) throw IoError("PHF1: bad node count");
    g.n[a] = int(n);
  }
  for (int a = 0; a < g.dim; ++a) g.period[a] = get_f64(bytes, pos);
  try {
    validate(g);
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("PHF1: ") + e.what());
  }
  if (bytes.size() != pos + 8 * g.size()) throw IoError("PHF1: payload size mismatch");
  GridField f(g);
  for (double& v : f.values) v = get_f64(bytes, pos);
  return f;
}

void write_phf1(const GridField& field, const std::filesystem::path& path) {
  const auto bytes = encode_phf1(field);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

GridField read_phf1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_phf1(bytes);
}

}  // namespace perhom
