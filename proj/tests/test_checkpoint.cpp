#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "capora/checkpoint.hpp"

using namespace capora;

namespace {

Checkpoint sample() {
  Checkpoint cp;
  cp.kind = "model";
  cp.meta = {{"alpha", "1"}, {"note", "spaces and = signs kept"}};
  cp.strings = {{"vocab", {"<bos>", "<eos>", "a", "man"}},
                {"empty", {}}};
  Eigen::MatrixXd m(2, 3);
  m << 0.5, -1.25, 3.7e-12, 1e300, -0.0, 42.0;
  Eigen::MatrixXd v(4, 1);
  v << 1, 2, 3, 4.000000000000001;
  cp.tensors = {{"m", m}, {"v", v}};
  return cp;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint cp = sample();
  std::string path = "/tmp/capora_test_cp.bin";
  cp.save(path);
  Checkpoint back = Checkpoint::load(path);
  CHECK(back.kind == cp.kind);
  CHECK(back.meta == cp.meta);
  CHECK(back.strings == cp.strings);
  REQUIRE(back.tensors.size() == cp.tensors.size());
  for (std::size_t i = 0; i < cp.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == cp.tensors[i].first);
    const auto& a = cp.tensors[i].second;
    const auto& b = back.tensors[i].second;
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    for (long r = 0; r < a.rows(); ++r)
      for (long c = 0; c < a.cols(); ++c) {
        // Bit-for-bit, including signed zero.
        CHECK(std::bit_cast<std::uint64_t>(a(r, c)) ==
              std::bit_cast<std::uint64_t>(b(r, c)));
      }
  }
}

TEST_CASE("saving twice produces identical bytes") {
  Checkpoint cp = sample();
  cp.save("/tmp/capora_test_cp_a.bin");
  cp.save("/tmp/capora_test_cp_b.bin");
  std::ifstream fa("/tmp/capora_test_cp_a.bin", std::ios::binary);
  std::ifstream fb("/tmp/capora_test_cp_b.bin", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)),
                 std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)),
                 std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("truncated file is an error") {
  Checkpoint cp = sample();
  std::string path = "/tmp/capora_test_cp_full.bin";
  cp.save(path);
  std::ifstream in(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  std::string cut_path = "/tmp/capora_test_cp_cut.bin";
  std::ofstream out(cut_path, std::ios::binary);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size() - 5));
  out.close();
  CHECK_THROWS_AS(Checkpoint::load(cut_path), DataError);
}

TEST_CASE("missing file is an error") {
  CHECK_THROWS_AS(Checkpoint::load("/tmp/capora_no_such_file.bin"), DataError);
}

TEST_CASE("garbage header is an error") {
  std::string path = "/tmp/capora_test_cp_garbage.bin";
  std::ofstream out(path, std::ios::binary);
  out << "not a checkpoint\n";
  out.close();
  CHECK_THROWS_AS(Checkpoint::load(path), DataError);
}

TEST_CASE("meta lookup helpers") {
  Checkpoint cp = sample();
  CHECK(cp.meta_value("alpha") == std::string("1"));
  CHECK_FALSE(cp.meta_value("missing").has_value());
  CHECK(cp.require_meta("note") == "spaces and = signs kept");
  CHECK_THROWS_AS(cp.require_meta("missing"), DataError);
}
