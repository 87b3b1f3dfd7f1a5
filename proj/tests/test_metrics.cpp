#include <doctest.h>

#include <cmath>
#include <random>

#include "nnk/metrics.hpp"
#include "nnk/rng.hpp"
#include "support/synthetic.hpp"

using namespace nnk;

TEST_CASE("kmeans") {
  SUBCASE("k equals n: every point is its own cluster, inertia 0") {
    Matrix pts = synth::uniform_cloud(12, 3, 3);
    const auto clusters = kmeans(pts, 12, 1);
    CHECK(clusters.cluster_count == 12);
    std::vector<char> seen(12, 0);
    for (int c : clusters.assignments) seen[c] = 1;
    for (char s : seen) CHECK(s == 1);
    CHECK(kmeans_inertia(pts, clusters) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("two separated blobs are recovered") {
    Matrix pts(10, 2);
    for (int i = 0; i < 5; ++i) pts.row(i) << 0.0 + 0.01 * i, 0.0;
    for (int i = 5; i < 10; ++i) pts.row(i) << 10.0 + 0.01 * i, 0.0;
    const auto clusters = kmeans(pts, 2, 7);
    for (int i = 1; i < 5; ++i) CHECK(clusters.assignments[i] == clusters.assignments[0]);
    for (int i = 6; i < 10; ++i) CHECK(clusters.assignments[i] == clusters.assignments[5]);
    CHECK(clusters.assignments[0] != clusters.assignments[5]);
  }

  SUBCASE("beats random assignments on inertia") {
    Matrix pts = synth::uniform_cloud(30, 4, 5);
    const auto clusters = kmeans(pts, 3, 11);
    const double inertia = kmeans_inertia(pts, clusters);
    auto rng = make_rng(13, "random-assign");
    std::uniform_int_distribution<int> pick(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
      ClusterAssignment random_assign;
      random_assign.cluster_count = 3;
      random_assign.assignments.resize(30);
      bool used[3] = {false, false, false};
      for (int i = 0; i < 30; ++i) {
        random_assign.assignments[i] = pick(rng);
        used[random_assign.assignments[i]] = true;
      }
      if (!(used[0] && used[1] && used[2])) continue;
      CHECK(inertia <= kmeans_inertia(pts, random_assign) + 1e-12);
    }
  }

  SUBCASE("k greater than n is a hard error") {
    Matrix pts = synth::uniform_cloud(5, 2, 1);
    CHECK_THROWS_AS(kmeans(pts, 6, 0), std::invalid_argument);
  }

  SUBCASE("deterministic given the seed; no cluster left empty") {
    Matrix pts = synth::uniform_cloud(50, 3, 9);
    const auto a = kmeans(pts, 7, 42);
    const auto b = kmeans(pts, 7, 42);
    CHECK(a.assignments == b.assignments);
    std::vector<int> counts(7, 0);
    for (int c : a.assignments) ++counts[c];
    for (int c = 0; c < 7; ++c) CHECK(counts[c] > 0);
  }
}

TEST_CASE("nmi") {
  SUBCASE("identical partitions with at least two classes score 1") {
    CHECK(nmi({0, 1, 0, 1, 2}, {0, 1, 0, 1, 2}) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("single catch-all cluster scores 0") {
    CHECK(nmi({0, 0, 0, 0}, {0, 1, 2, 3}) == 0.0);
  }

  SUBCASE("independent partitions score 0") {
    CHECK(nmi({0, 0, 1, 1}, {0, 1, 0, 1}) == 0.0);
  }

  SUBCASE("symmetric and invariant under relabelling") {
    auto rng = make_rng(21, "nmi-prop");
    std::uniform_int_distribution<int> pick(0, 3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> a(40), b(40);
      for (int i = 0; i < 40; ++i) {
        a[i] = pick(rng);
        b[i] = pick(rng);
      }
      CHECK(nmi(a, b) == doctest::Approx(nmi(b, a)).epsilon(1e-12));
      std::vector<int> permuted(a.size());
      const int perm[4] = {2, 0, 3, 1};
      for (std::size_t i = 0; i < a.size(); ++i) permuted[i] = perm[a[i]];
      CHECK(nmi(a, b) == doctest::Approx(nmi(permuted, b)).epsilon(1e-12));
    }
  }

  SUBCASE("length mismatch is a hard error") {
    CHECK_THROWS_AS(nmi({0, 1}, {0, 1, 2}), std::invalid_argument);
  }
}

TEST_CASE("recall_at_k") {
  SUBCASE("k = n-1 with every class populated twice scores 1") {
    nnk::Dataset data = synth::blobs(3, 4, 2, 3.0, 0.5, 31);
    const auto recall = recall_at_k(data.features, data.labels, {11});
    CHECK(recall.at(11) == 1.0);
  }

  SUBCASE("interleaved singleton classes score 0 at R@1") {
    Matrix pts(2, 1);
    pts << 0.0, 1.0;
    const auto recall = recall_at_k(pts, {0, 1}, {1});
    CHECK(recall.at(1) == 0.0);
  }

  SUBCASE("matches exhaustive recomputation on random labelled points") {
    nnk::Dataset data = synth::blobs(5, 10, 4, 2.0, 1.0, 37);
    const std::vector<int> ks = {1, 2, 4, 8};
    const auto recall = recall_at_k(data.features, data.labels, ks);
    for (int k : ks) {
      int hits = 0;
      for (int i = 0; i < data.size(); ++i) {
        std::vector<std::pair<double, int>> scored;
        for (int j = 0; j < data.size(); ++j) {
          if (j == i) continue;
          scored.emplace_back((data.features.row(i) - data.features.row(j)).squaredNorm(), j);
        }
        std::sort(scored.begin(), scored.end());
        bool hit = false;
        for (int r = 0; r < k; ++r) {
          if (data.labels[scored[r].second] == data.labels[i]) hit = true;
        }
        if (hit) ++hits;
      }
      CHECK(recall.at(k) == doctest::Approx(static_cast<double>(hits) / data.size()).epsilon(1e-12));
    }
  }

  SUBCASE("monotone non-decreasing in k") {
    nnk::Dataset data = synth::blobs(4, 8, 3, 1.0, 1.5, 41);
    const auto recall = recall_at_k(data.features, data.labels, {1, 2, 3, 5, 8, 16, 31});
    double previous = 0.0;
    for (const auto& [k, value] : recall) {
      CHECK(value >= previous);
      previous = value;
    }
  }

  SUBCASE("invariant under rotation and uniform scaling") {
    nnk::Dataset data = synth::blobs(4, 6, 3, 2.0, 0.8, 43);
    const std::vector<int> ks = {1, 2, 4};
    const auto base = recall_at_k(data.features, data.labels, ks);

    // Householder reflection (orthogonal) followed by a positive scale.
    Vector v(3);
    v << 1.0, 2.0, -1.0;
    v.normalize();
    const Matrix rotation = Matrix::Identity(3, 3) - 2.0 * (v * v.transpose());
    const Matrix transformed = (data.features * rotation.transpose()) * 3.7;
    const auto moved = recall_at_k(transformed, data.labels, ks);
    for (int k : ks) {
      CHECK(base.at(k) == moved.at(k));
    }
  }

  SUBCASE("k outside [1, n) is a hard error") {
    Matrix pts = synth::uniform_cloud(6, 2, 47);
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    CHECK_THROWS_AS(recall_at_k(pts, labels, {6}), std::invalid_argument);
    CHECK_THROWS_AS(recall_at_k(pts, labels, {0}), std::invalid_argument);
  }
}

TEST_CASE("split_transfer") {
  SUBCASE("200 classes at fraction 0.5: first hundred train") {
    std::vector<int> labels;
    for (int c = 0; c < 200; ++c) labels.push_back(c);
    const auto split = split_transfer(labels, 0.5);
    REQUIRE(split.train_classes.size() == 100);
    REQUIRE(split.test_classes.size() == 100);
    CHECK(split.train_classes.front() == 0);
    CHECK(split.train_classes.back() == 99);
    CHECK(split.test_classes.front() == 100);
    CHECK(split.test_classes.back() == 199);
  }

  SUBCASE("two classes split one and one") {
    const auto split = split_transfer({0, 1, 0, 1}, 0.5);
    CHECK(split.train_classes == std::vector<int>{0});
    CHECK(split.test_classes == std::vector<int>{1});
  }

  SUBCASE("ceil rule: five classes at 0.5 give three train") {
    const auto split = split_transfer({0, 1, 2, 3, 4}, 0.5);
    CHECK(split.train_classes == std::vector<int>{0, 1, 2});
    CHECK(split.test_classes == std::vector<int>{3, 4});
  }

  SUBCASE("degenerate inputs are hard errors") {
    CHECK_THROWS_AS(split_transfer({0, 0, 0}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(split_transfer({0, 1}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(split_transfer({0, 1}, 1.0), std::invalid_argument);
  }
}
