#include "openfl/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "openfl/rng.hpp"

namespace openfl {

ClassMeans draw_class_means(int d, Rng& rng) {
  if (d < 1) throw std::invalid_argument("draw_class_means: d must be >= 1");
  ClassMeans means;
  means.positive.resize(d);
  means.negative.resize(d);
  for (int j = 0; j < d; ++j) means.positive[j] = rng.bernoulli(0.5) ? 1.0 : -1.0;
  for (int j = 0; j < d; ++j) means.negative[j] = rng.bernoulli(0.5) ? 1.0 : -1.0;
  return means;
}

Dataset sample_dataset(const ClassMeans& means, int m, double sigma_data, Rng& rng) {
  if (m < 1) throw std::invalid_argument("sample_dataset: m must be >= 1");
  if (sigma_data < 0.0) throw std::invalid_argument("sample_dataset: sigma_data must be >= 0");
  const int d = static_cast<int>(means.positive.size());
  Dataset data;
  data.samples.resize(m);
  for (int i = 0; i < m; ++i) {
    const bool positive = rng.bernoulli(0.5);
    const Vec& mu = positive ? means.positive : means.negative;
    LabeledSample& s = data.samples[i];
    s.label = positive ? 1.0 : -1.0;
    s.features.resize(d);
    for (int j = 0; j < d; ++j) s.features[j] = mu[j] + sigma_data * rng.normal();
  }
  return data;
}

Dataset generate_synthetic_dataset(int d, int m, double sigma_data, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("generate_synthetic_dataset: d must be >= 1");
  if (m < 1) throw std::invalid_argument("generate_synthetic_dataset: m must be >= 1");
  Rng rng(seed);
  // Class means drawn first, then samples; the order is part of the
  // determinism contract.
  const ClassMeans means = draw_class_means(d, rng);
  Dataset data = sample_dataset(means, m, sigma_data, rng);
  data.source_seed = seed;
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  const int d = data.dim();
  for (int j = 0; j < d; ++j) std::fprintf(f, "f%d,", j);
  std::fprintf(f, "label\n");
  for (const auto& s : data.samples) {
    for (int j = 0; j < d; ++j) std::fprintf(f, "%.17g,", s.features[j]);
    std::fprintf(f, "%.17g\n", s.label);
  }
  std::fclose(f);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);

  // header: f0,...,f<d-1>,label
  int d = 0;
  {
    std::stringstream ss(line);
    std::string col;
    bool saw_label = false;
    while (std::getline(ss, col, ',')) {
      if (col == "label") {
        saw_label = true;
        break;
      }
      if (col != "f" + std::to_string(d))
        throw std::runtime_error("read_dataset_csv: unexpected header column '" + col + "'");
      ++d;
    }
    if (!saw_label || d == 0)
      throw std::runtime_error("read_dataset_csv: malformed header in " + path);
  }

  Dataset data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    LabeledSample s;
    s.features.reserve(d);
    for (int j = 0; j < d + 1; ++j) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("read_dataset_csv: short row in " + path);
      const double v = std::stod(cell);
      if (j < d)
        s.features.push_back(v);
      else
        s.label = v;
    }
    if (s.label != 1.0 && s.label != -1.0)
      throw std::runtime_error("read_dataset_csv: label must be -1 or +1");
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) throw std::runtime_error("read_dataset_csv: no samples in " + path);
  return data;
}

}  // namespace openfl
