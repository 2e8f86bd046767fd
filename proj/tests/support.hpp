// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "bilcnet/tensor.hpp"

namespace testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("bilcnet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
bilcnet::Tensor<T> randn(bilcnet::Shape shape, std::uint64_t seed, double sd = 1.0) {
  bilcnet::Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

}  // namespace testing
