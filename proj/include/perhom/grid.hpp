#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "perhom/types.hpp"

namespace perhom {

/// Uniform periodic lattice. Node j on an axis sits at j*h for j < N/2 and at
/// (j - N)*h otherwise, so node 0 is the origin and the cell is centered.
struct TorusGrid {
  int dim = 1;
  std::array<int, 2> n{8, 1};
  std::array<double, 2> period{1.0, 1.0};

  static TorusGrid make(int dim, int n_per_axis, double period);

  double h(int axis) const { return period[axis] / n[axis]; }
  std::size_t size() const { return dim == 1 ? std::size_t(n[0]) : std::size_t(n[0]) * std::size_t(n[1]); }
  std::size_t index(int i, int j = 0) const;
  /// Neighbor of node k shifted by (di, dj) with periodic wrap.
  std::size_t shift(std::size_t k, int di, int dj = 0) const;
  std::array<int, 2> multi_index(std::size_t k) const;
  Vec2 coord(std::size_t k) const;
};

void validate(const TorusGrid& grid);

struct GridField {
  TorusGrid grid;
  std::vector<double> values;

  GridField() = default;
  explicit GridField(const TorusGrid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}

  double& operator[](std::size_t k) { return values[k]; }
  double operator[](std::size_t k) const { return values[k]; }
  double min() const;
  double max() const;
  double oscillation() const { return max() - min(); }
};

/// Largest one-sided difference quotient over nodes and axes.
double corrector_lipschitz(const GridField& field);

/// PHF1 layout: "PHF1", d, N per axis (u64 LE), period per axis (f64 LE), values (f64 LE, row-major).
void write_phf1(const GridField& field, const std::filesystem::path& path);
GridField read_phf1(const std::filesystem::path& path);
std::vector<unsigned char> encode_phf1(const GridField& field);
GridField decode_phf1(const std::vector<unsigned char>& bytes);

/// Thrown on unreadable, unwritable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace perhom
