#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "cha/errors.hpp"
#include "cha/metrics.hpp"
#include "oracles.hpp"

using namespace cha;

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(tokenize("A Pond, near; the Road."), (Tokens{"a", "pond", "near", "the", "road"}));
  EXPECT_TRUE(tokenize("  ").empty());
}

TEST(Bleu, ClippedUnigramCount) {
  std::vector<Tokens> c = {tokenize("the the the")};
  std::vector<References> r = {{tokenize("the cat")}};
  auto b = bleu(c, r);
  EXPECT_DOUBLE_EQ(b[0], 1.0 / 3.0);
  EXPECT_EQ(b[1], 0.0);
}

TEST(Bleu, BrevityPenalty) {
  std::vector<Tokens> c = {tokenize("a b")};
  std::vector<References> r = {{tokenize("a b c d")}};
  EXPECT_NEAR(bleu(c, r)[0], 0.36788, 1e-5);
  EXPECT_DOUBLE_EQ(bleu(c, r)[0], std::exp(-1.0));
}

TEST(Bleu, ClosestReferenceLengthPrefersShorterOnTies) {
  // Candidate length 3; references of length 2 and 4 are equally close, so
  // the shorter one is used and no penalty applies.
  std::vector<Tokens> c = {tokenize("a b c")};
  std::vector<References> r = {{tokenize("a b c d"), tokenize("a b")}};
  EXPECT_EQ(bleu(c, r)[0], 1.0);
}

TEST(Bleu, IdenticalCorpusScoresOneExactly) {
  std::vector<Tokens> c = {tokenize("there is one pond in the scene"), tokenize("a road near a tree and a bridge")};
  std::vector<References> r = {{c[0], tokenize("something else entirely")}, {c[1]}};
  for (double x : bleu(c, r)) EXPECT_EQ(x, 1.0);
}

TEST(Bleu, EmptyCandidateScoresZero) {
  std::vector<Tokens> c = {{}};
  std::vector<References> r = {{tokenize("a b c d")}};
  for (double x : bleu(c, r)) EXPECT_EQ(x, 0.0);
}

TEST(Metrics, EmptyOrMismatchedCorpus) {
  std::vector<Tokens> none;
  std::vector<References> no_refs;
  EXPECT_THROW(bleu(none, no_refs), DomainError);
  EXPECT_THROW(cider(none, no_refs), DomainError);
  std::vector<Tokens> one = {tokenize("a")};
  EXPECT_THROW(bleu(one, no_refs), ShapeError);
}

TEST(RougeL, HandLcsCase) {
  // LCS 3, P = 3/4, R = 1: F = (1 + 1.44) * 0.75 / (1 + 1.44 * 0.75) = 1.83 / 2.08.
  EXPECT_NEAR(rouge_l_sentence(tokenize("a b c d"), {tokenize("a c d")}), 1.83 / 2.08, 1e-12);
  EXPECT_NEAR(rouge_l_sentence(tokenize("a b c d"), {tokenize("a c d")}), 0.87981, 1e-5);
  EXPECT_EQ(rouge_l_sentence(tokenize("a b"), {tokenize("a b")}), 1.0);
  EXPECT_EQ(rouge_l_sentence(tokenize("a b"), {tokenize("c d")}), 0.0);
  EXPECT_EQ(rouge_l_sentence(tokenize("a b"), {tokenize("c d"), tokenize("a b")}), 1.0);
}

TEST(Cider, DisjointCandidateScoresZero) {
  std::vector<Tokens> c = {tokenize("x y z"), tokenize("a b")};
  std::vector<References> r = {{tokenize("a b c")}, {tokenize("a b")}};
  EXPECT_EQ(cider_per_image(c, r)[0], 0.0);
}

TEST(Cider, TwoImageCorpusMatchesBruteForce) {
  std::vector<Tokens> c = {tokenize("a pond near a road"), tokenize("a tree")};
  std::vector<References> r = {{tokenize("a pond near a road"), tokenize("a pond near a road")},
                               {tokenize("a tree on a field"), tokenize("one tree")}};
  EXPECT_NEAR(cider(c, r), oracle::brute_force_cider(c, r), 1e-9);
  EXPECT_GT(cider(c, r), 0.0);
}

TEST(Cider, RandomCorporaMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<Tokens> c;
    std::vector<References> r;
    oracle::random_corpus(seed, c, r);
    EXPECT_NEAR(cider(c, r), oracle::brute_force_cider(c, r), 1e-9) << "seed " << seed;
  }
}

TEST(Report, JsonKeysAndTableColumns) {
  std::vector<std::string> ids = {"img00000"};
  std::vector<Tokens> c = {tokenize("a b c d")};
  std::vector<References> r = {{tokenize("a b c d")}};
  EvalReport rep = evaluate(ids, c, r);
  EXPECT_EQ(rep.bleu[0], 1.0);
  auto j = nlohmann::ordered_json::parse(report_json(rep));
  std::vector<std::string> keys;
  for (auto& [k, v] : j["scores"].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"B-1", "B-2", "B-3", "B-4", "C", "R"}));
  ASSERT_EQ(j["images"].size(), 1u);
  EXPECT_EQ(j["images"][0]["image_id"], "img00000");
  const std::string table = report_table(rep);
  EXPECT_EQ(table.substr(0, table.find('\n')).find("B-1"), 0u);
  EXPECT_LT(table.find("B-4"), table.find("C "));
  EXPECT_LT(table.find("C "), table.find("R"));
  EXPECT_NE(table.find("1.000"), std::string::npos);
}
