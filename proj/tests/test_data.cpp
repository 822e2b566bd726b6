#include "s2p/data.hpp"
#include "s2p/error.hpp"
#include "s2p/random.hpp"
#include "s2p/synthetic.hpp"
#include "test_util.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace s2p;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> make_ids(int64_t n) {
  std::vector<std::string> ids;
  for (int64_t i = 0; i < n; ++i) ids.push_back(synthetic_identity_id(i));
  return ids;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("split sizes of the two reference partitions") {
    const auto a = split_identities(make_ids(123), 100.0 / 123.0, 1);
    CHECK(a.train.size() == 100);
    CHECK(a.test.size() == 23);
    const auto b = split_identities(make_ids(123), 0.813, 1);
    CHECK(b.train.size() == 100);
    CHECK(b.test.size() == 23);
    const auto c = split_identities(make_ids(1194), 1000.0 / 1194.0, 1);
    CHECK(c.train.size() == 1000);
    CHECK(c.test.size() == 194);
  }

  TEST_CASE("split property: disjoint, exhaustive, rounded, seeded") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
      const auto n = static_cast<int64_t>(2 + rng.below(300));
      const double frac = rng.uniform(0.01, 0.99);
      const uint64_t seed = rng.next();
      const auto ids = make_ids(n);
      const auto s = split_identities(ids, frac, seed);
      const auto expected_train =
          std::clamp<int64_t>(static_cast<int64_t>(std::llround(static_cast<double>(n) * frac)), 1, n - 1);
      CHECK(static_cast<int64_t>(s.train.size()) == expected_train);
      std::set<std::string> all(s.train.begin(), s.train.end());
      for (const auto& id : s.test) CHECK(all.insert(id).second);
      CHECK(all == std::set<std::string>(ids.begin(), ids.end()));
      const auto again = split_identities(ids, frac, seed);
      CHECK(again.train == s.train);
      CHECK(again.test == s.test);
    }
    CHECK(split_identities(make_ids(50), 0.5, 1).train != split_identities(make_ids(50), 0.5, 2).train);
  }

  TEST_CASE("split errors") {
    auto kind_of = [](auto&& f) {
      try {
        f();
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::Protocol;
    };
    CHECK(kind_of([] { split_identities(make_ids(10), 0.0, 1); }) == ErrorKind::Domain);
    CHECK(kind_of([] { split_identities(make_ids(10), 1.0, 1); }) == ErrorKind::Domain);
    CHECK(kind_of([] { split_identities(make_ids(1), 0.5, 1); }) == ErrorKind::Dataset);
  }

  TEST_CASE("preprocess maps bytes to [-1, 1]") {
    RawImage img;
    img.width = img.height = 4;
    img.rgb.assign(4 * 4 * 3, 0);
    img.rgb[0] = 255;
    const auto t = preprocess(img, 4);
    CHECK(t.sizes() == torch::IntArrayRef({3, 4, 4}));
    CHECK(t[0][0][0].item<double>() == doctest::Approx(1.0));
    CHECK(t[1][0][0].item<double>() == doctest::Approx(-1.0));
    const auto big = preprocess(img, 8);
    CHECK(big.sizes() == torch::IntArrayRef({3, 8, 8}));
    CHECK(big.min().item<double>() >= -1.0);
    CHECK(big.max().item<double>() <= 1.0);
    const auto flipped = preprocess(img, 4, true);
    CHECK(flipped[0][0][3].item<double>() == doctest::Approx(1.0));
  }

  TEST_CASE("png round trip is lossless at 8 bits") {
    test::TempDir dir("png");
    const auto x = (torch::randint(0, 256, {3, 8, 8}).to(torch::kFloat32) / 127.5f) - 1.0f;
    write_png(dir / "x.png", x);
    const auto y = preprocess(decode_image(dir / "x.png"), 8);
    CHECK(torch::allclose(x, y, 1e-5, 1e-5));
    try {
      decode_image(dir / "missing.png");
      FAIL("expected a dataset error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Dataset);
    }
  }

  TEST_CASE("synthetic dataset: layout, determinism and pairing") {
    test::TempDir a("synth_a"), b("synth_b");
    SyntheticDatasetOptions o;
    o.n_identities = 12;
    o.train_fraction = 0.75;
    const auto m = generate_synthetic_dataset(o, a.str());
    generate_synthetic_dataset(o, b.str());
    CHECK(m.split.train.size() == 9);
    CHECK(m.split.test.size() == 3);
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    CHECK(m.files('a', "train").size() == 9);
    CHECK(m.files('b', "test").size() == 3);
    for (const auto& f : m.files('b', "train")) {
      const auto rel = fs::relative(f, a.path());
      CHECK(slurp(f) == slurp((b.path() / rel).string()));
    }
    const auto loaded = DatasetManifest::load(a / "manifest.json");
    CHECK(loaded.split.train == m.split.train);
    REQUIRE(loaded.has_pairing());
    CHECK(loaded.pairing()->size() == 12);
    CHECK(loaded.pairing()->front().landmarks_a.size() == static_cast<size_t>(kLandmarkCount));

    o.n_identities = 1;
    try {
      generate_synthetic_dataset(o, (a.path() / "bad").string());
      FAIL("expected a usage error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Usage);
      CHECK(std::string(e.what()).find("need ≥ 2 identities") != std::string::npos);
    }
  }

  TEST_CASE("geometry jitter displaces sketch landmarks") {
    double zero = 0.0, jit = 0.0;
    for (uint64_t s = 0; s < 10; ++s) {
      SyntheticFaceParams p{synthetic_identity_seed(1, static_cast<int64_t>(s)), 0.0, StrokeStyle::Pencil};
      zero += landmark_alignment_error(render_photo(p, 64).landmarks, render_sketch(p, 64).landmarks, 64);
      p.geometry_jitter = 0.05;
      jit += landmark_alignment_error(render_photo(p, 64).landmarks, render_sketch(p, 64).landmarks, 64);
    }
    CHECK(zero == doctest::Approx(0.0));
    CHECK(jit > 0.01 * 10);
  }

  TEST_CASE("distinct identities render differently, variants keep the identity") {
    const SyntheticFaceParams p{synthetic_identity_seed(1, 0), 0.05, StrokeStyle::Pencil};
    const SyntheticFaceParams q{synthetic_identity_seed(1, 1), 0.05, StrokeStyle::Pencil};
    const auto a = preprocess(render_photo(p, 64).image, 64);
    const auto b = preprocess(render_photo(q, 64).image, 64);
    const auto a1 = preprocess(render_photo(p, 64, 1).image, 64);
    CHECK_FALSE(torch::equal(a, b));
    CHECK_FALSE(torch::equal(a, a1));
    CHECK(torch::equal(a, preprocess(render_photo(p, 64).image, 64)));
  }

  TEST_CASE("training streams never read the pairing") {
    test::TempDir dir("unpaired");
    SyntheticDatasetOptions o;
    o.n_identities = 6;
    o.train_fraction = 0.5;
    const auto m = generate_synthetic_dataset(o, dir.str());
    const auto before = DatasetManifest::pairing_reads();
    {
      UnpairedScope scope;
      const auto streams = load_unpaired(m, "train", StreamOptions{64, 3, false, 1});
      CHECK(streams.a.size() == 3);
      CHECK(streams.b.size() == 3);
      try {
        (void)m.pairing();
        FAIL("expected a protocol error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Protocol);
      }
    }
    CHECK(DatasetManifest::pairing_reads() == before + 1);
    CHECK_NOTHROW((void)m.pairing());
  }

  TEST_CASE("image stream order depends only on seed, domain and epoch") {
    test::TempDir dir("stream");
    SyntheticDatasetOptions o;
    o.n_identities = 10;
    o.train_fraction = 0.8;
    const auto m = generate_synthetic_dataset(o, dir.str());
    const ImageStream s1(m.files('a', "train"), 0xa, StreamOptions{64, 5, false, 1});
    const ImageStream s2(m.files('a', "train"), 0xa, StreamOptions{64, 5, false, 2});
    CHECK(s1.epoch_order(0) == s2.epoch_order(0));
    CHECK(s1.epoch_order(0) != s1.epoch_order(1));
    auto order = s1.epoch_order(3);
    std::sort(order.begin(), order.end());
    for (size_t i = 0; i < order.size(); ++i) CHECK(order[i] == i);
    CHECK(torch::equal(s1.batch(2, 1, 3), s2.batch(2, 1, 3)));
    CHECK(s1.batch(0, 0, 3).sizes() == torch::IntArrayRef({3, 3, 64, 64}));
    CHECK(s1.batches_per_epoch(3) == 3);
  }

  TEST_CASE("undecodable images are skipped up to ten percent") {
    test::TempDir dir("corrupt");
    SyntheticDatasetOptions o;
    o.n_identities = 12;
    o.train_fraction = 11.0 / 12.0;
    const auto m = generate_synthetic_dataset(o, dir.str());
    auto files = m.files('b', "train");
    REQUIRE(files.size() == 11);
    std::ofstream(files[0], std::ios::trunc) << "not a png";
    const ImageStream s(files, 0xb, StreamOptions{64, 1, false, 1});
    CHECK(s.size() == 10);
    CHECK(s.skipped() == 1);
    std::ofstream(files[1], std::ios::trunc) << "not a png";
    try {
      ImageStream bad(files, 0xb, StreamOptions{64, 1, false, 1});
      FAIL("expected a dataset error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Dataset);
    }
  }

  TEST_CASE("manifest validation rejects overlapping splits") {
    DatasetManifest m;
    m.split.train = {"a", "b"};
    m.split.test = {"b"};
    CHECK_THROWS_AS(m.validate(), Error);
  }

  TEST_CASE("rng state round trip") {
    Rng a(7);
    for (int i = 0; i < 10; ++i) a.next();
    Rng b(0);
    b.set_state(a.state());
    for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
    CHECK_THROWS_AS(b.set_state("garbage"), Error);
  }

  TEST_CASE("rng below is unbiased enough for small ranges") {
    Rng r(11);
    std::array<int, 3> counts{};
    const int n = 30000;
    for (int i = 0; i < n; ++i) counts[r.below(3)]++;
    for (int c : counts) CHECK(std::abs(c - n / 3) < 4 * std::sqrt(n * (1.0 / 3) * (2.0 / 3)));
  }
}
