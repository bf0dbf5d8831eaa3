#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dsaqc/dicom.hpp"
#include "dsaqc/errors.hpp"
#include "dsaqc/ingest.hpp"
#include "dsaqc/png_io.hpp"
#include "support/temp_dir.hpp"

using namespace dsaqc;
namespace fs = std::filesystem;

namespace {

FrameStack random_stack(std::mt19937_64& rng, int t, int h, int w) {
  FrameStack s;
  s.frame_count = t;
  s.height = h;
  s.width = w;
  s.sequence_id = "seq";
  s.patient_id = "pat";
  std::uniform_real_distribution<double> u(0, 4095);
  s.data.resize(static_cast<std::size_t>(t) * h * w);
  for (double& v : s.data) v = std::round(u(rng));
  return s;
}

std::vector<std::uint16_t> to_u16(const FrameStack& s) { return {s.data.begin(), s.data.end()}; }

}  // namespace

TEST_CASE("compute_minip") {
  FrameStack s;
  s.frame_count = 3;
  s.height = 1;
  s.width = 2;
  s.data = {5, 1, 2, 7, 9, 0};
  s.sequence_id = "x";
  const MinIPImage m = ingest::compute_minip(s);
  CHECK(m.image.pixels == std::vector<double>{2, 0});
  CHECK(m.image_id == "x");

  SUBCASE("frame permutation invariance") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      const int T = 1 + static_cast<int>(rng() % 6);
      FrameStack a = random_stack(rng, T, 5, 7);
      FrameStack b = a;
      std::vector<int> order(T);
      for (int i = 0; i < T; ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
      for (int t = 0; t < T; ++t) {
        auto src = a.frame(order[t]);
        std::copy(src.begin(), src.end(), b.frame(t).begin());
      }
      CHECK(ingest::compute_minip(a).image == ingest::compute_minip(b).image);
      const MinIPImage n1 = ingest::normalize(ingest::compute_minip(a));
      const MinIPImage n2 = ingest::normalize(n1);
      CHECK(n1.image == n2.image);
      const auto [lo, hi] = std::minmax_element(n1.image.pixels.begin(), n1.image.pixels.end());
      CHECK(*lo >= 0.0);
      CHECK(*hi <= 1.0);
    }
  }
  SUBCASE("invalid stacks") {
    FrameStack bad = s;
    bad.data.pop_back();
    CHECK_THROWS_AS(ingest::compute_minip(bad), MalformedInputError);
    FrameStack empty;
    CHECK_THROWS_AS(ingest::compute_minip(empty), MalformedInputError);
  }
}

TEST_CASE("normalize") {
  MinIPImage m{"a", "p", Image2D(2, 2)};
  m.image.pixels = {10, 20, 30, 50};
  const auto n = ingest::normalize(m);
  CHECK(n.image.pixels == std::vector<double>{0, 0.25, 0.5, 1.0});
  m.image.pixels = {3, 3, 3, 3};
  CHECK(ingest::normalize(m).image.pixels == std::vector<double>{0, 0, 0, 0});
  m.image.pixels = {0, std::nan(""), 1, 2};
  CHECK_THROWS_AS(ingest::normalize(m), MalformedInputError);
}

TEST_CASE("DICOM round trip is bit exact") {
  test_support::TempDir tmp;
  std::mt19937_64 rng(2);
  const FrameStack s = random_stack(rng, 4, 9, 11);
  const fs::path file = tmp.path / "P01__S03.dcm";
  dicom::write_multiframe(file, "P01", "2.25.1234", 9, 11, to_u16(s));
  CHECK(dicom::looks_like_dicom(file));
  const dicom::Dataset ds = dicom::read(file);
  CHECK(ds.rows == 9);
  CHECK(ds.columns == 11);
  CHECK(ds.frames == 4);
  CHECK(ds.patient_id == "P01");
  const FrameStack back = ingest::load_sequence(file);
  CHECK(back.data == s.data);
  CHECK(back.patient_id == "P01");
  CHECK(back.sequence_id == "P01__S03");

  SUBCASE("big-endian transfer syntax is unsupported") {
    std::ifstream in(file, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    const std::string le = "1.2.840.10008.1.2.1";
    const auto pos = bytes.find(le);
    REQUIRE(pos != std::string::npos);
    bytes[pos + le.size() - 1] = '2';
    const fs::path be = tmp.path / "be.dcm";
    std::ofstream(be, std::ios::binary) << bytes;
    CHECK_THROWS_AS(dicom::read(be), UnsupportedError);
  }
  SUBCASE("truncated file") {
    std::ifstream in(file, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    const fs::path cut = tmp.path / "cut.dcm";
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 50);
    CHECK_THROWS_AS(dicom::read(cut), MalformedInputError);
  }
}

TEST_CASE("load_sequence inputs") {
  test_support::TempDir tmp;
  std::mt19937_64 rng(3);
  SUBCASE("directory of PNG frames in name order") {
    const fs::path dir = tmp.path / "P7__run1";
    fs::create_directories(dir);
    const FrameStack s = random_stack(rng, 3, 6, 5);
    for (int t = 0; t < 3; ++t) {
      auto f = s.frame(t);
      png::write_gray16(dir / ("f" + std::to_string(t) + ".png"), 6, 5, {f.begin(), f.end()});
    }
    const FrameStack back = ingest::load_sequence(dir);
    CHECK(back.frame_count == 3);
    CHECK(back.data == s.data);
    CHECK(back.patient_id == "P7");
    CHECK(back.sequence_id == "P7__run1");
  }
  SUBCASE("directory of DICOM files") {
    const fs::path dir = tmp.path / "series";
    fs::create_directories(dir);
    const FrameStack a = random_stack(rng, 1, 4, 4), b = random_stack(rng, 2, 4, 4);
    dicom::write_multiframe(dir / "b.dcm", "PX", "2.25.2", 4, 4, to_u16(b));
    dicom::write_multiframe(dir / "a.dcm", "PX", "2.25.2", 4, 4, to_u16(a));
    const FrameStack back = ingest::load_sequence(dir);
    CHECK(back.frame_count == 3);
    std::vector<double> expected = a.data;
    expected.insert(expected.end(), b.data.begin(), b.data.end());
    CHECK(back.data == expected);
    CHECK(back.patient_id == "PX");
  }
  SUBCASE("single PNG") {
    const FrameStack s = random_stack(rng, 1, 3, 3);
    png::write_gray16(tmp.path / "one.png", 3, 3, to_u16(s));
    CHECK(ingest::load_sequence(tmp.path / "one.png").data == s.data);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ingest::load_sequence(tmp.path / "nope"), NotFoundError);
    fs::create_directories(tmp.path / "empty");
    CHECK_THROWS_AS(ingest::load_sequence(tmp.path / "empty"), MalformedInputError);
    fs::create_directories(tmp.path / "mixed");
    png::write_gray16(tmp.path / "mixed" / "a.png", 2, 2, {1, 2, 3, 4});
    png::write_gray16(tmp.path / "mixed" / "b.png", 3, 2, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(ingest::load_sequence(tmp.path / "mixed"), MalformedInputError);
    std::ofstream(tmp.path / "junk.dcm") << "not an image";
    CHECK_THROWS_AS(ingest::load_sequence(tmp.path / "junk.dcm"), MalformedInputError);
  }
}

TEST_CASE("corpus round trip") {
  test_support::TempDir tmp;
  std::mt19937_64 rng(4);
  std::vector<MinIPImage> images;
  for (int i = 0; i < 3; ++i) {
    images.push_back(ingest::normalize(ingest::compute_minip(random_stack(rng, 2, 8, 6))));
    images.back().image_id = "P" + std::to_string(i) + "__S0";
    images.back().patient_id = "P" + std::to_string(i);
  }
  ingest::write_corpus(images, tmp.path);
  const auto back = ingest::read_corpus(tmp.path / ingest::kManifestName);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].image_id == images[i].image_id);
    CHECK(back[i].patient_id == images[i].patient_id);
    for (std::size_t k = 0; k < back[i].image.size(); ++k) {
      CHECK(std::fabs(back[i].image.pixels[k] - images[i].image.pixels[k]) <= 0.5 / 65535 + 1e-12);
    }
  }
  CHECK(ingest::ids_from_name("dir/P3__S9.dcm") == std::pair<std::string, std::string>{"P3__S9", "P3"});
  CHECK(ingest::ids_from_name("dir/plain.dcm") == std::pair<std::string, std::string>{"plain", "plain"});
}
