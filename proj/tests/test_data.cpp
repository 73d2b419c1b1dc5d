#include "fedsim/data.hpp"
#include "fedsim/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(bytes, 4);
}

struct IdxFixture {
  fs::path dir = fs::temp_directory_path() / "fedsim_idx_test";
  fs::path images = dir / "images.idx";
  fs::path labels = dir / "labels.idx";

  IdxFixture() { fs::create_directories(dir); }
  ~IdxFixture() { fs::remove_all(dir); }

  void write(std::uint32_t image_magic, std::uint32_t n, bool truncate = false) {
    {
      std::ofstream out(images, std::ios::binary);
      put_be32(out, image_magic);
      put_be32(out, n);
      put_be32(out, 2);
      put_be32(out, 2);
      const std::size_t bytes = truncate ? 4 * n - 1 : 4 * n;
      for (std::size_t i = 0; i < bytes; ++i) out.put(static_cast<char>(i % 2 ? 255 : 0));
    }
    std::ofstream out(labels, std::ios::binary);
    put_be32(out, 0x801);
    put_be32(out, n);
    for (std::uint32_t i = 0; i < n; ++i) out.put(static_cast<char>(i % 3));
  }
};

}  // namespace

TEST_CASE("label distribution entropy") {
  FeatureMatrix x = FeatureMatrix::Zero(4, 2);
  const ClientDataset ds = ClientDataset::from(x, {0, 0, 0, 1}, 3);
  const LabelDistribution d = label_distribution(ds);
  CHECK(d.probs(0) == doctest::Approx(0.75));
  CHECK(d.probs(2) == 0.0);
  CHECK(d.entropy == doctest::Approx(0.562335).epsilon(1e-6));
  CHECK(LabelDistribution::uniform(10).entropy == doctest::Approx(std::log(10.0)));
  CHECK(LabelDistribution::one_hot(10, 3).entropy == 0.0);
  CHECK_THROWS_AS(ClientDataset::from(x, {0, 0, 0, 3}, 3), ConfigError);
}

TEST_CASE("subset keeps rows in order") {
  FeatureMatrix x(3, 1);
  x << 10, 11, 12;
  const ClientDataset ds = ClientDataset::from(x, {0, 1, 1}, 2);
  const std::vector<std::size_t> rows = {2, 0};
  const ClientDataset s = ds.subset(rows);
  CHECK(s.features(0, 0) == 12);
  CHECK(s.labels == std::vector<int>{1, 0});
  CHECK(s.class_counts == std::vector<std::size_t>{1, 1});
}

TEST_CASE("blobs are balanced and seeded") {
  BlobSpec spec;
  spec.num_classes = 4;
  spec.per_class = 20;
  spec.dim = 3;
  spec.seed = 5;
  const TrainTestSplit a = generate_blobs(spec), b = generate_blobs(spec);
  CHECK(a.train.size() == 80);
  CHECK(a.test.size() == 20);
  for (auto c : a.train.class_counts) CHECK(c == 20);
  CHECK(a.train.features == b.train.features);
  spec.seed = 6;
  CHECK(generate_blobs(spec).train.features != a.train.features);
  spec.num_classes = 1;
  CHECK_THROWS_AS(generate_blobs(spec), ConfigError);
}

TEST_CASE("IDX loader") {
  IdxFixture f;
  SUBCASE("well-formed files") {
    f.write(0x803, 3);
    const ClientDataset ds = load_idx(f.images, f.labels, 3);
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 4);
    CHECK(ds.features(0, 0) == 0.0);
    CHECK(ds.features(0, 1) == 1.0);
    CHECK(ds.labels == std::vector<int>{0, 1, 2});
  }
  SUBCASE("bad magic") {
    f.write(0x802, 3);
    CHECK_THROWS_AS(load_idx(f.images, f.labels, 3), ParseError);
  }
  SUBCASE("truncated payload reports the offset") {
    f.write(0x803, 3, true);
    try {
      load_idx(f.images, f.labels, 3);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 16 + 11);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_idx(f.dir / "nope", f.labels, 3), ParseError); }
}

TEST_CASE("cohorts are contiguous id ranges") {
  PartitionSpec spec{50, {0.1, 0.2, 0.3, 0.4, 0.5}, 1};
  CHECK(spec.cohort_begin(1) == 10);
  CHECK(spec.cohort_end(4) == 50);
  CHECK(spec.cohort_of(9) == 0);
  CHECK(spec.cohort_of(10) == 1);
  PartitionSpec bad{5, {0.1, -1.0}, 1};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  PartitionSpec too_many{1, {0.1, 0.2}, 1};
  CHECK_THROWS_AS(too_many.validate(), ConfigError);
}

TEST_CASE("Dirichlet partition conserves every sample") {
  BlobSpec blobs;
  blobs.num_classes = 10;
  blobs.per_class = 100;
  blobs.dim = 2;
  const ClientDataset pooled = generate_blobs(blobs).train;
  const PartitionSpec spec{50, {0.001, 0.002, 0.005, 0.01, 0.5}, 3};
  const Partition p = dirichlet_partition(pooled, spec);
  REQUIRE(p.clients.size() == 50);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (std::size_t k = 0; k < 50; ++k) {
    CHECK(!p.clients[k].empty());
    CHECK(p.cohort[k] == k / 10);
    total += p.rows[k].size();
    seen.insert(p.rows[k].begin(), p.rows[k].end());
    for (std::size_t i = 0; i < p.rows[k].size(); ++i)
      CHECK(p.clients[k].labels[i] == pooled.labels[p.rows[k][i]]);
  }
  CHECK(total == 1000);
  CHECK(seen.size() == 1000);

  // Each class is split equally across cohorts.
  for (std::size_t cohort = 0; cohort < 5; ++cohort) {
    std::vector<std::size_t> counts(10, 0);
    for (std::size_t k = cohort * 10; k < cohort * 10 + 10; ++k)
      for (std::size_t c = 0; c < 10; ++c) counts[c] += p.clients[k].class_counts[c];
    for (std::size_t c = 0; c < 10; ++c) CHECK(counts[c] == 20);
  }
  CHECK(dirichlet_partition(pooled, spec).rows == p.rows);
}

TEST_CASE("large alpha gives nearly uniform clients") {
  BlobSpec blobs;
  blobs.num_classes = 5;
  blobs.per_class = 400;
  blobs.dim = 2;
  const Partition p = dirichlet_partition(generate_blobs(blobs).train, {4, {1000.0}, 2});
  for (const auto& c : p.clients) CHECK(label_distribution(c).entropy > 0.99 * std::log(5.0));
}

TEST_CASE("Dirichlet draws") {
  Rng rng(1);
  const Vector v = dirichlet_draw(0.5, 6, rng);
  CHECK(v.sum() == doctest::Approx(1.0));
  CHECK(v.minCoeff() >= 0.0);
  // Tiny alpha still yields a valid simplex point.
  const Vector w = dirichlet_draw(1e-4, 6, rng);
  CHECK(w.sum() == doctest::Approx(1.0));
  CHECK(w.maxCoeff() > 0.99);
}
