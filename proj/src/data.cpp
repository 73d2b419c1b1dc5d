#include "fedsim/data.hpp"

#include "fedsim/math.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace fedsim {

ClientDataset ClientDataset::from(FeatureMatrix features, std::vector<int> labels, Index num_classes) {
  if (features.rows() != static_cast<Index>(labels.size()))
    throw ConfigError("feature rows and label count differ");
  if (num_classes < 1) throw ConfigError("number of classes must be positive");
  ClientDataset ds;
  ds.class_counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw ConfigError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    ++ds.class_counts[static_cast<std::size_t>(y)];
  }
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  return ds;
}

ClientDataset ClientDataset::subset(std::span<const std::size_t> rows) const {
  FeatureMatrix x(static_cast<Index>(rows.size()), dim());
  std::vector<int> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Index>(r)) = features.row(static_cast<Index>(rows[r]));
    y[r] = labels[rows[r]];
  }
  return from(std::move(x), std::move(y), num_classes());
}

LabelDistribution LabelDistribution::from_probs(Vector probs) {
  LabelDistribution d;
  d.entropy = fedsim::entropy(probs);
  d.probs = std::move(probs);
  return d;
}

LabelDistribution LabelDistribution::uniform(Index num_classes) {
  return from_probs(Vector::Constant(num_classes, 1.0 / static_cast<double>(num_classes)));
}

LabelDistribution LabelDistribution::one_hot(Index num_classes, Index cls) {
  Vector p = Vector::Zero(num_classes);
  p(cls) = 1.0;
  return from_probs(std::move(p));
}

LabelDistribution label_distribution(const ClientDataset& ds) {
  if (ds.empty()) throw DomainError("label distribution of an empty dataset");
  Vector p(ds.num_classes());
  const double n = static_cast<double>(ds.size());
  for (Index i = 0; i < p.size(); ++i) p(i) = static_cast<double>(ds.class_counts[static_cast<std::size_t>(i)]) / n;
  return LabelDistribution::from_probs(std::move(p));
}

TrainTestSplit generate_blobs(const BlobSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("blobs need at least 2 classes");
  if (spec.per_class < 1) throw ConfigError("blobs need at least 1 sample per class");
  if (spec.dim < 2) throw ConfigError("blob dimension must be at least 2");
  Rng rng = make_rng(spec.seed, Stream::Data);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix means(spec.num_classes, spec.dim);
  for (Index c = 0; c < spec.num_classes; ++c)
    for (Index j = 0; j < spec.dim; ++j) means(c, j) = spec.separation * gauss(rng);

  auto sample = [&](Index per_class) {
    const Index n = per_class * spec.num_classes;
    FeatureMatrix x(n, spec.dim);
    std::vector<int> y(static_cast<std::size_t>(n));
    Index row = 0;
    for (Index c = 0; c < spec.num_classes; ++c) {
      for (Index s = 0; s < per_class; ++s, ++row) {
        for (Index j = 0; j < spec.dim; ++j) x(row, j) = means(c, j) + spec.spread * gauss(rng);
        y[static_cast<std::size_t>(row)] = static_cast<int>(c);
      }
    }
    return ClientDataset::from(std::move(x), std::move(y), spec.num_classes);
  };

  TrainTestSplit split;
  split.train = sample(spec.per_class);
  split.test = sample(std::max<Index>(1, spec.per_class / 4));
  return split;
}

namespace {

class IdxReader {
 public:
  explicit IdxReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ParseError("cannot open " + path.string(), 0);
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    read(b.data(), b.size());
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

  void read(unsigned char* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) throw ParseError(path_.string() + ": truncated file", offset_ + got);
    offset_ += n;
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

}  // namespace

ClientDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       Index num_classes) {
  IdxReader images(images_path);
  if (const auto magic = images.u32(); magic != 0x00000803u)
    throw ParseError(images_path.string() + ": bad image magic " + std::to_string(magic), 0);
  const std::uint32_t n_images = images.u32();
  const std::uint32_t rows = images.u32();
  const std::uint32_t cols = images.u32();

  IdxReader labels(labels_path);
  if (const auto magic = labels.u32(); magic != 0x00000801u)
    throw ParseError(labels_path.string() + ": bad label magic " + std::to_string(magic), 0);
  const std::uint32_t n_labels = labels.u32();
  if (n_labels != n_images)
    throw ParseError("image count " + std::to_string(n_images) + " != label count " + std::to_string(n_labels),
                     labels.offset() - 4);

  const std::size_t pixels = std::size_t{rows} * cols;
  FeatureMatrix x(static_cast<Index>(n_images), static_cast<Index>(pixels));
  std::vector<unsigned char> buffer(pixels);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    images.read(buffer.data(), buffer.size());
    for (std::size_t p = 0; p < pixels; ++p)
      x(static_cast<Index>(i), static_cast<Index>(p)) = static_cast<double>(buffer[p]) / 255.0;
  }
  std::vector<int> y(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    unsigned char b = 0;
    const auto at = labels.offset();
    labels.read(&b, 1);
    if (b >= num_classes)
      throw ParseError(labels_path.string() + ": label " + std::to_string(b) + " out of range", at);
    y[i] = b;
  }
  return ClientDataset::from(std::move(x), std::move(y), num_classes);
}

void PartitionSpec::validate() const {
  if (num_clients < 1) throw ConfigError("partition needs at least one client");
  if (alphas.empty()) throw ConfigError("partition needs at least one alpha");
  if (alphas.size() > num_clients) throw ConfigError("more alpha cohorts than clients");
  for (double a : alphas)
    if (!(a > 0)) throw DomainError("Dirichlet concentration must be positive, got " + std::to_string(a));
}

std::size_t PartitionSpec::cohort_begin(std::size_t cohort) const {
  const std::size_t base = num_clients / alphas.size();
  const std::size_t extra = num_clients % alphas.size();
  return cohort * base + std::min(cohort, extra);
}

std::size_t PartitionSpec::cohort_end(std::size_t cohort) const { return cohort_begin(cohort + 1); }

std::size_t PartitionSpec::cohort_of(ClientId k) const {
  for (std::size_t c = 0; c + 1 < alphas.size(); ++c)
    if (k < cohort_end(c)) return c;
  return alphas.size() - 1;
}

namespace {

// Integer counts proportional to shares, summing exactly to total.
std::vector<std::size_t> largest_remainder(const Vector& shares, std::size_t total) {
  const auto n = static_cast<std::size_t>(shares.size());
  std::vector<std::size_t> counts(n);
  std::vector<double> frac(n);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double exact = shares(static_cast<Index>(k)) * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    frac[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[order[r % n]];
  // Shares can sum to slightly above 1 in floating point.
  for (auto it = order.rbegin(); assigned > total; ++it) {
    if (it == order.rend()) it = order.rbegin();
    if (counts[*it] > 0) {
      --counts[*it];
      --assigned;
    }
  }
  return counts;
}

}  // namespace

Partition dirichlet_partition(const ClientDataset& pooled, const PartitionSpec& spec) {
  spec.validate();
  const Index num_classes = pooled.num_classes();
  const std::size_t cohorts = spec.alphas.size();
  Rng rng = make_rng(spec.seed, Stream::Partition);

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t r = 0; r < pooled.labels.size(); ++r) by_class[static_cast<std::size_t>(pooled.labels[r])].push_back(r);

  Partition part;
  part.rows.assign(spec.num_clients, {});
  part.cohort.resize(spec.num_clients);
  for (ClientId k = 0; k < spec.num_clients; ++k) part.cohort[k] = spec.cohort_of(k);

  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::size_t n_class = rows.size();
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < cohorts; ++c) {
      // Equal split of the class across cohorts; earlier cohorts take the remainder.
      const std::size_t chunk = n_class / cohorts + (c < n_class % cohorts ? 1 : 0);
      const std::size_t begin = spec.cohort_begin(c);
      const std::size_t members = spec.cohort_end(c) - begin;
      const Vector shares = dirichlet_draw(spec.alphas[c], static_cast<Index>(members), rng);
      const auto counts = largest_remainder(shares, chunk);
      for (std::size_t m = 0; m < members; ++m) {
        auto& dst = part.rows[begin + m];
        dst.insert(dst.end(), rows.begin() + static_cast<std::ptrdiff_t>(cursor),
                   rows.begin() + static_cast<std::ptrdiff_t>(cursor + counts[m]));
        cursor += counts[m];
      }
    }
  }

  // Empty-client repair: move one sample from the largest client of the same cohort.
  for (std::size_t c = 0; c < cohorts; ++c) {
    const std::size_t begin = spec.cohort_begin(c);
    const std::size_t end = spec.cohort_end(c);
    for (ClientId k = begin; k < end; ++k) {
      if (!part.rows[k].empty()) continue;
      ClientId donor = begin;
      for (ClientId j = begin; j < end; ++j)
        if (part.rows[j].size() > part.rows[donor].size()) donor = j;
      if (part.rows[donor].size() < 2)
        throw DomainError("cohort " + std::to_string(c) + " has fewer samples than clients");
      part.rows[k].push_back(part.rows[donor].back());
      part.rows[donor].pop_back();
    }
  }

  part.clients.reserve(spec.num_clients);
  for (auto& rows : part.rows) {
    std::sort(rows.begin(), rows.end());
    part.clients.push_back(pooled.subset(rows));
  }
  return part;
}

}  // namespace fedsim
