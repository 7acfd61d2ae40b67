#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "jrl/data.hpp"
#include "jrl/model.hpp"
#include "jrl/numerics.hpp"
#include "jrl/recurrent_cells.hpp"
#include "oracles.hpp"

namespace testing {

inline oracle::Vector to_oracle(const jrl::Vec& v) { return {v.begin(), v.end()}; }

inline oracle::Matrix to_oracle(const jrl::Mat& m) {
  oracle::Matrix out(m.rows(), oracle::Vector(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

inline oracle::Gates to_oracle(const jrl::GateWeights& w) {
  return {to_oracle(w.f), to_oracle(w.i), to_oracle(w.o), to_oracle(w.g)};
}

inline oracle::Biases to_oracle(const jrl::GateBiases& b) {
  return {to_oracle(b.f), to_oracle(b.i), to_oracle(b.o), to_oracle(b.g)};
}

inline jrl::Vec random_vec(std::size_t n, jrl::Rng& rng, double radius = 1.0) {
  jrl::Vec v(n);
  for (double& x : v) x = rng.uniform(-radius, radius);
  return v;
}

inline jrl::Mat random_mat(std::size_t r, std::size_t c, jrl::Rng& rng, double radius = 1.0) {
  jrl::Mat m(r, c);
  for (double& x : m.values()) x = rng.uniform(-radius, radius);
  return m;
}

template <typename Params>
void randomize(Params& p, jrl::Rng& rng, double radius = 1.0) {
  jrl::for_each_cell_tensor(p, [&](const std::string&, auto& t) {
    for (double& x : t.values()) x = rng.uniform(-radius, radius);
  });
}

inline double max_abs_diff(const oracle::Vector& a, const jrl::Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("jrl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
