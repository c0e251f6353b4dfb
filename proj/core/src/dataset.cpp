#include "gengap/dataset.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "gengap/binary_io.hpp"
#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"
#include "gengap/rng.hpp"

namespace gengap {

std::string to_string(Generator g) {
  switch (g) {
    case Generator::kGaussMixture:
      return "gauss_mixture";
    case Generator::kTwoMoons:
      return "two_moons";
    case Generator::kRings:
      return "rings";
  }
  return "?";
}

Generator parse_generator(const std::string& name) {
  if (name == "gauss_mixture") return Generator::kGaussMixture;
  if (name == "two_moons") return Generator::kTwoMoons;
  if (name == "rings") return Generator::kRings;
  throw ConfigError(fmt::format("unknown dataset generator '{}'", name));
}

std::size_t DatasetSpec::num_classes() const {
  return generator == Generator::kTwoMoons ? 2 : classes;
}

std::size_t DatasetSpec::num_dims() const {
  return generator == Generator::kGaussMixture ? dims : 2;
}

void DatasetSpec::validate() const {
  if (num_classes() < 2) throw ConfigError("dataset needs at least two classes");
  if (num_dims() == 0) throw ConfigError("dataset dims must be positive");
  if (train_size == 0 || K == 0) {
    throw ConfigError("dataset train_size and K must be positive");
  }
  if (!(sigma >= 0.0) || !(noise >= 0.0)) {
    throw ConfigError("dataset sigma and noise must be nonnegative");
  }
}

namespace {

class Sampler {
 public:
  explicit Sampler(const DatasetSpec& spec)
      : spec_(spec), stream_(derive_seed(spec.seed, SeedRole::kData)) {
    if (spec.generator == Generator::kGaussMixture) {
      RandomStream centers(derive_seed(spec.centers_seed, SeedRole::kInit));
      centers_.resize(spec.classes * spec.dims);
      for (auto& c : centers_) c = centers.normal();
    }
  }

  void sample(std::size_t label, std::span<double> out) {
    switch (spec_.generator) {
      case Generator::kGaussMixture:
        for (std::size_t d = 0; d < out.size(); ++d) {
          out[d] = centers_[label * spec_.dims + d] + spec_.sigma * stream_.normal();
        }
        break;
      case Generator::kTwoMoons: {
        const double t = std::numbers::pi * stream_.uniform();
        if (label == 0) {
          out[0] = std::cos(t);
          out[1] = std::sin(t);
        } else {
          out[0] = 1.0 - std::cos(t);
          out[1] = 0.5 - std::sin(t);
        }
        out[0] += spec_.noise * stream_.normal();
        out[1] += spec_.noise * stream_.normal();
        break;
      }
      case Generator::kRings: {
        const double t = 2.0 * std::numbers::pi * stream_.uniform();
        const double r = static_cast<double>(label + 1) + spec_.noise * stream_.normal();
        out[0] = r * std::cos(t);
        out[1] = r * std::sin(t);
        break;
      }
    }
  }

 private:
  const DatasetSpec& spec_;
  RandomStream stream_;
  std::vector<double> centers_;
};

}  // namespace

DatasetBundle generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto C = spec.num_classes();
  const auto D = spec.num_dims();
  std::vector<std::size_t> split_sizes(spec.K, spec.train_size);
  split_sizes.push_back(spec.unlabeled);
  split_sizes.push_back(spec.dev);
  split_sizes.push_back(spec.test);
  const auto total =
      std::accumulate(split_sizes.begin(), split_sizes.end(), std::size_t{0});

  // Sample in split order, then scatter to shuffled global positions.
  std::vector<std::size_t> position(total);
  std::iota(position.begin(), position.end(), std::size_t{0});
  RandomStream perm(derive_seed(spec.seed, SeedRole::kCell));
  perm.shuffle(std::span<std::size_t>(position));

  DatasetBundle b;
  b.num_classes = C;
  b.features = Tensor({std::max<std::size_t>(total, 1), D});
  b.labels.assign(total, 0);
  Sampler sampler(spec);
  std::vector<std::vector<std::size_t>> splits(split_sizes.size());
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < split_sizes.size(); ++s) {
    for (std::size_t i = 0; i < split_sizes[s]; ++i, ++cursor) {
      const auto label = i % C;
      const auto row = position[cursor];
      sampler.sample(label, b.features.row(row));
      b.labels[row] = label;
      splits[s].push_back(row);
    }
  }
  for (std::size_t k = 0; k < spec.K; ++k) b.train_indices.push_back(splits[k]);
  b.unlabeled_indices = splits[spec.K];
  b.dev_indices = splits[spec.K + 1];
  b.test_indices = splits[spec.K + 2];
  return b;
}

namespace {

LabeledSet labeled(const DatasetBundle& b, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw DomainError("requested split is empty");
  LabeledSet all{b.features, b.labels};
  return all.subset(idx);
}

}  // namespace

LabeledSet DatasetBundle::train(std::size_t k) const {
  return labeled(*this, train_indices.at(k));
}

std::vector<LabeledSet> DatasetBundle::train_sets() const {
  std::vector<LabeledSet> out;
  for (std::size_t k = 0; k < train_indices.size(); ++k) out.push_back(train(k));
  return out;
}

LabeledSet DatasetBundle::dev() const { return labeled(*this, dev_indices); }
LabeledSet DatasetBundle::test() const { return labeled(*this, test_indices); }

Tensor DatasetBundle::unlabeled() const {
  if (unlabeled_indices.empty()) throw DomainError("unlabeled pool is empty");
  return features.gather_rows(unlabeled_indices);
}

namespace {
constexpr char kMagic[] = "GGDS";
constexpr std::uint16_t kVersion = 1;

void put_indices(binary::Writer& w, const std::vector<std::size_t>& idx) {
  w.put(static_cast<std::uint32_t>(idx.size()));
  for (auto i : idx) w.put(static_cast<std::uint32_t>(i));
}

std::vector<std::size_t> get_indices(binary::Reader& r, std::size_t n) {
  const auto count = r.get<std::uint32_t>();
  std::vector<std::size_t> out(count);
  for (auto& i : out) {
    i = r.get<std::uint32_t>();
    if (i >= n) throw FormatError("dataset split index out of range");
  }
  return out;
}
}  // namespace

std::string encode_dataset(const DatasetBundle& b) {
  binary::Writer w;
  w.put_bytes(std::string(kMagic, 4));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(b.labels.size()));
  w.put(static_cast<std::uint32_t>(b.features.cols()));
  w.put(static_cast<std::uint32_t>(b.num_classes));
  for (std::size_t i = 0; i < b.labels.size() * b.features.cols(); ++i) {
    w.put(b.features[i]);
  }
  for (auto y : b.labels) w.put(static_cast<std::uint32_t>(y));
  w.put(static_cast<std::uint32_t>(b.train_indices.size()));
  for (const auto& t : b.train_indices) put_indices(w, t);
  put_indices(w, b.unlabeled_indices);
  put_indices(w, b.dev_indices);
  put_indices(w, b.test_indices);
  const auto& bytes = w.bytes();
  return std::string(bytes.begin(), bytes.end());
}

DatasetBundle decode_dataset(const std::string& s) {
  binary::Reader r(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  if (r.get_bytes(4) != std::string(kMagic, 4)) {
    throw FormatError("not a dataset file: bad magic");
  }
  if (r.get<std::uint16_t>() != kVersion) {
    throw FormatError("unsupported dataset version");
  }
  DatasetBundle b;
  const auto n = r.get<std::uint32_t>();
  const auto d = r.get<std::uint32_t>();
  b.num_classes = r.get<std::uint32_t>();
  if (d == 0) throw FormatError("dataset has zero dims");
  std::vector<double> feats(static_cast<std::size_t>(std::max<std::uint32_t>(n, 1)) * d, 0.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * d; ++i) {
    feats[i] = r.get<double>();
  }
  b.features = Tensor({std::max<std::uint32_t>(n, 1), d}, std::move(feats));
  b.labels.resize(n);
  for (auto& y : b.labels) {
    y = r.get<std::uint32_t>();
    if (y >= b.num_classes) throw FormatError("dataset label out of range");
  }
  const auto K = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < K; ++k) b.train_indices.push_back(get_indices(r, n));
  b.unlabeled_indices = get_indices(r, n);
  b.dev_indices = get_indices(r, n);
  b.test_indices = get_indices(r, n);
  if (!r.at_end()) throw FormatError("trailing bytes in dataset file");
  return b;
}

void save_dataset(const std::filesystem::path& path, const DatasetBundle& b) {
  write_file_atomic(path, encode_dataset(b));
}

DatasetBundle load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file(path));
}

}  // namespace gengap
