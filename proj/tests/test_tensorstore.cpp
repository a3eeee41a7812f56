#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include <Eigen/SVD>

#include "etc/matrix_io.hpp"
#include "etc/synth.hpp"

namespace fs = std::filesystem;
using namespace etc;

namespace {

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() /
           ("etc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() { fs::remove_all(dir_); }
  std::string file(const std::string& name) const {
    return (dir_ / name).string();
  }

 private:
  fs::path dir_;
  static inline int counter_ = 0;
};

MatrixXd quantize_f32(const MatrixXd& m) {
  return m.cast<float>().cast<double>();
}

TEST(MatrixIo, RoundTripSmall) {
  TempDir tmp;
  EmbeddingMatrix m;
  m.concept_id = "demo";
  m.data.resize(2, 3);
  m.data << 1, 2, 3, 4, 5, 6;
  const std::string path = tmp.file("m.etcm");
  save_matrix(m, path);

  // header(14) + id + 2*3 f32 payload
  EXPECT_EQ(fs::file_size(path), 14u + 4u + 24u);

  const EmbeddingMatrix back = load_matrix(path);
  EXPECT_EQ(back.concept_id, "demo");
  EXPECT_TRUE(back.data.isApprox(m.data, 0.0));
}

TEST(MatrixIo, RejectsNaN) {
  TempDir tmp;
  EmbeddingMatrix m;
  m.concept_id = "bad";
  m.data = MatrixXd::Zero(2, 2);
  m.data(1, 1) = std::nan("");
  EXPECT_THROW(save_matrix(m, tmp.file("bad.etcm")), validation_error);
}

TEST(MatrixIo, LargeMatrixSizeAndRoundTrip) {
  TempDir tmp;
  Rng rng(11);
  EmbeddingMatrix m;
  m.concept_id = "wide";
  m.data = rng.normal_matrix(768, 100);
  const std::string path = tmp.file("wide.etcm");
  save_matrix(m, path);
  EXPECT_EQ(fs::file_size(path), 14u + 4u + 768u * 100u * 4u);
  const EmbeddingMatrix back = load_matrix(path);
  EXPECT_TRUE(back.data.isApprox(quantize_f32(m.data), 0.0));
}

TEST(MatrixIo, SaveLoadIsIdentityOnF32Lattice) {
  TempDir tmp;
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingMatrix m;
    m.concept_id = "p" + std::to_string(trial);
    m.data = quantize_f32(rng.normal_matrix(5 + trial, 3 + trial));
    const std::string path = tmp.file("p.etcm");
    save_matrix(m, path);
    const EmbeddingMatrix back = load_matrix(path);
    ASSERT_TRUE(back.data.isApprox(m.data, 0.0));
    // load o save on the file is also an identity, byte for byte.
    const std::string bytes_before = read_file_bytes(path);
    save_matrix(back, path);
    EXPECT_EQ(read_file_bytes(path), bytes_before);
  }
}

TEST(MatrixIo, WrongMagicIsFormatError) {
  TempDir tmp;
  const std::string path = tmp.file("junk.etcm");
  write_file_bytes(path, std::string("JUNKdata that is long enough padding"));
  try {
    load_matrix(path);
    FAIL() << "expected format_error";
  } catch (const format_error& e) {
    EXPECT_NE(std::string(e.what()).find("45 54 43 4D"), std::string::npos);
  }
}

TEST(MatrixIo, TruncatedPayloadIsCorruption) {
  TempDir tmp;
  EmbeddingMatrix m;
  m.concept_id = "t";
  m.data = MatrixXd::Ones(3, 4);
  const std::string path = tmp.file("t.etcm");
  save_matrix(m, path);
  std::string bytes = read_file_bytes(path);
  bytes.pop_back();
  write_file_bytes(path, bytes);
  EXPECT_THROW(load_matrix(path), corruption_error);
}

TEST(MatrixIo, TrailingBytesRejected) {
  TempDir tmp;
  EmbeddingMatrix m;
  m.concept_id = "t";
  m.data = MatrixXd::Ones(3, 4);
  const std::string path = tmp.file("t.etcm");
  save_matrix(m, path);
  write_file_bytes(path, read_file_bytes(path) + "x");
  EXPECT_THROW(load_matrix(path), corruption_error);
}

TEST(MatrixIo, NaNPayloadIsValidationError) {
  TempDir tmp;
  EmbeddingMatrix m;
  m.concept_id = "n";
  m.data = MatrixXd::Ones(2, 2);
  const std::string path = tmp.file("n.etcm");
  save_matrix(m, path);
  std::string bytes = read_file_bytes(path);
  // Overwrite the first payload float with a quiet NaN bit pattern.
  const std::size_t payload_at = 14 + m.concept_id.size();
  bytes[payload_at + 0] = char(0x00);
  bytes[payload_at + 1] = char(0x00);
  bytes[payload_at + 2] = char(0xc0);
  bytes[payload_at + 3] = char(0x7f);
  write_file_bytes(path, bytes);
  EXPECT_THROW(load_matrix(path), validation_error);
}

TEST(MatrixIo, BlocksRoundTrip) {
  TempDir tmp;
  Rng rng(3);
  const MatrixXd a = quantize_f32(rng.normal_matrix(4, 5));
  const MatrixXd b = quantize_f32(rng.normal_matrix(2, 2));
  const std::string path = tmp.file("blocks.etcmb");
  save_blocks({{"a", a}, {"b", b}}, path);
  const auto blocks = load_blocks(path);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_TRUE(find_block(blocks, "a", path).isApprox(a, 0.0));
  EXPECT_TRUE(find_block(blocks, "b", path).isApprox(b, 0.0));
  EXPECT_THROW(find_block(blocks, "missing", path), corruption_error);
}

TEST(Synth, ShapeRankAndDeterminism) {
  SyntheticCorpusSpec spec;
  spec.num_concepts = 3;
  spec.d = 16;
  spec.samples_per_concept = 200;
  spec.modes_per_concept = 2;
  spec.tail_dof = 2.0;
  spec.intrinsic_rank = 4;
  spec.seed = 7;

  const auto corpus = gen_synthetic_corpus(spec);
  ASSERT_EQ(corpus.size(), 3u);
  for (const auto& m : corpus) {
    EXPECT_EQ(m.d(), 16);
    EXPECT_EQ(m.n(), 200);
    Eigen::BDCSVD<MatrixXd> svd(m.data);
    const auto& sv = svd.singularValues();
    EXPECT_LT(sv[4] / sv[0], 1e-6);
    EXPECT_GT(sv[3] / sv[0], 1e-6);
  }
  // Same spec, same seed: bit identical.
  const auto again = gen_synthetic_corpus(spec);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    EXPECT_TRUE(again[i].data.isApprox(corpus[i].data, 0.0));

  // Concept means pairwise distinct.
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t j = i + 1; j < corpus.size(); ++j)
      EXPECT_GT((corpus[i].data.rowwise().mean() -
                 corpus[j].data.rowwise().mean())
                    .norm(),
                1e-6);
}

TEST(Synth, FullRankBoundary) {
  SyntheticCorpusSpec spec;
  spec.num_concepts = 1;
  spec.d = 6;
  spec.samples_per_concept = 100;
  spec.modes_per_concept = 1;
  spec.tail_dof = 5.0;
  spec.intrinsic_rank = 6;
  spec.seed = 1;
  const auto corpus = gen_synthetic_corpus(spec);
  Eigen::BDCSVD<MatrixXd> svd(corpus[0].data);
  const auto& sv = svd.singularValues();
  EXPECT_GT(sv[5] / sv[0], 1e-6);
}

TEST(Synth, RankAboveDimensionRejected) {
  SyntheticCorpusSpec spec;
  spec.num_concepts = 1;
  spec.d = 4;
  spec.samples_per_concept = 10;
  spec.intrinsic_rank = 5;
  spec.seed = 1;
  EXPECT_THROW(gen_synthetic_corpus(spec), validation_error);
}

TEST(Synth, HeavyTailsHavePositiveExcessKurtosis) {
  SyntheticCorpusSpec spec;
  spec.num_concepts = 1;
  spec.d = 6;
  spec.samples_per_concept = 10000;
  spec.modes_per_concept = 1;
  spec.tail_dof = 3.0;
  spec.intrinsic_rank = 2;
  spec.seed = 13;
  const auto corpus = gen_synthetic_corpus(spec);
  const MatrixXd& x = corpus[0].data;
  const VectorXd mean = x.rowwise().mean();
  MatrixXd centered = x.colwise() - mean;
  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinU);
  const VectorXd dir = svd.matrixU().col(0);
  const VectorXd proj = centered.transpose() * dir;
  const double m2 = proj.array().square().mean();
  const double m4 = proj.array().pow(4).mean();
  const double excess_kurtosis = m4 / (m2 * m2) - 3.0;
  EXPECT_GT(excess_kurtosis, 0.0);
}

}  // namespace
