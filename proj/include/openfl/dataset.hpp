#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "openfl/vec.hpp"

namespace openfl {

struct LabeledSample {
  Vec features;
  double label = 1.0;  // exactly -1 or +1
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::uint64_t source_seed = 0;

  std::size_t size() const { return samples.size(); }
  int dim() const { return samples.empty() ? 0 : static_cast<int>(samples[0].features.size()); }
};

// The pair of class-mean vectors defining a two-class Gaussian mixture.
struct ClassMeans {
  Vec positive;
  Vec negative;
};

class Rng;

// Entries drawn element-wise as 2*Bernoulli(0.5) - 1.
ClassMeans draw_class_means(int d, Rng& rng);

// m samples from the mixture: labels uniform on {-1, +1}, features equal to
// the class mean plus element-wise N(0, sigma_data^2) noise.
Dataset sample_dataset(const ClassMeans& means, int m, double sigma_data, Rng& rng);

// Self-contained synthetic problem: draws its own class means, then samples.
// Deterministic given the seed.
Dataset generate_synthetic_dataset(int d, int m, double sigma_data, std::uint64_t seed);

// CSV schema: header "f0,...,f<d-1>,label", one row per sample.
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

}  // namespace openfl
