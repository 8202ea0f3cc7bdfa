#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace spn;
using namespace spn::testing;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(ModelIo, RoundTripIsBitExact) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    RandomSpnSpec spec;
    spec.gaussian_leaves = s % 2 == 0;
    spec.num_variables = 7;
    const SpnGraph g = gen_random_spn(spec, s);
    const std::string text = io::dump_model(g);
    const SpnGraph back = io::parse_model(text).graph;
    EXPECT_EQ(back, g);
    EXPECT_EQ(io::dump_model(back), text);
  }
}

TEST(ModelIo, LatentBlockRoundTrip) {
  const AugmentedSpn aug = augment(load_fixture("four_sums.json"));
  const io::ModelFile mf = io::parse_model(io::dump_model(aug.graph, io::lv_block(aug)));
  EXPECT_EQ(mf.graph, aug.graph);
  ASSERT_TRUE(mf.lv.has_value());
  EXPECT_EQ(mf.lv->model_variables, 3u);
  EXPECT_EQ(mf.lv->twin_link_edges, aug.twin_link_edges);
  ASSERT_EQ(mf.lv->latents.size(), aug.latents.size());
  for (std::size_t j = 0; j < aug.latents.size(); ++j) {
    EXPECT_EQ(mf.lv->latents[j].links, aug.latents[j].links);
    EXPECT_EQ(mf.lv->latents[j].twin, aug.latents[j].twin);
    EXPECT_EQ(mf.lv->latents[j].twin_weights, aug.latents[j].twin_weights);
  }
}

TEST(ModelIo, ArbitraryIdsAndOrder) {
  const std::string text = R"({
    "variables": [{"id": 0, "kind": "discrete", "cardinality": 2, "name": "A"}],
    "root": 70,
    "nodes": [
      {"id": 70, "type": "sum", "children": [12, 5], "weights": [0.25, 0.75]},
      {"id": 5, "type": "indicator", "var": 0, "state": 1},
      {"id": 12, "type": "indicator", "var": 0, "state": 0}
    ]})";
  const SpnGraph g = io::parse_model(text).graph;
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(g.root(), 2u);
  EXPECT_NEAR(log_evaluate(g, Evidence(1).observe(0, 0)), std::log(0.25), 1e-15);
}

TEST(ModelIo, WeightForms) {
  auto doc = [](const std::string& w) {
    return R"({"variables": [{"id": 0, "kind": "discrete", "cardinality": 2}], "root": 2, "nodes": [
      {"id": 0, "type": "indicator", "var": 0, "state": 0},
      {"id": 1, "type": "indicator", "var": 0, "state": 1},
      {"id": 2, "type": "sum", "children": [0, 1])" + w + "}]}";
  };
  EXPECT_EQ(io::parse_model(doc("")).graph.node(2).sum().weights, (std::vector<double>{0.5, 0.5}));
  const auto lw = io::parse_model(doc(R"(, "log_weights": [-0.6931471805599453, -0.6931471805599453])")).graph;
  EXPECT_NEAR(lw.node(2).sum().weights[0], 0.5, 1e-15);
  EXPECT_EQ(code_of([&] { io::parse_model(doc(R"(, "weights": [0.2, 0.2])")); }), ErrorCode::NonNormalizedWeights);
  EXPECT_EQ(code_of([&] { io::parse_model(doc(R"(, "weights": [-0.2, 1.2])")); }), ErrorCode::NegativeWeight);
}

TEST(ModelIo, StructuralErrors) {
  const std::string cyc = R"({"variables": [{"id": 0, "kind": "discrete", "cardinality": 2}], "root": 0, "nodes": [
    {"id": 0, "type": "product", "children": [1]},
    {"id": 1, "type": "product", "children": [0]}]})";
  EXPECT_EQ(code_of([&] { io::parse_model(cyc); }), ErrorCode::CycleDetected);
  const std::string dangling = R"({"variables": [{"id": 0, "kind": "discrete", "cardinality": 2}], "root": 0, "nodes": [
    {"id": 0, "type": "product", "children": [9]}]})";
  EXPECT_EQ(code_of([&] { io::parse_model(dangling); }), ErrorCode::UnknownReference);
  const std::string empty = R"({"variables": [{"id": 0, "kind": "discrete", "cardinality": 2}], "root": 0, "nodes": [
    {"id": 0, "type": "sum", "children": []}]})";
  EXPECT_EQ(code_of([&] { io::parse_model(empty); }), ErrorCode::EmptyChildren);
  const std::string badvar = R"({"variables": [{"id": 0, "kind": "continuous"}], "root": 0, "nodes": [
    {"id": 0, "type": "gaussian", "var": 0, "mean": 0, "variance": -1}]})";
  EXPECT_EQ(code_of([&] { io::parse_model(badvar); }), ErrorCode::NonPositiveVariance);
  EXPECT_EQ(code_of([&] { io::parse_model("{ not json"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { io::parse_model(R"({"variables": []})"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { io::load_model(model_path("malformed.json")); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { io::load_model(model_path("does_not_exist.json")); }), ErrorCode::ParseError);
}

TEST(EvidenceText, Values) {
  EXPECT_TRUE(std::holds_alternative<Marginalized>(io::parse_evidence_value("")));
  EXPECT_TRUE(std::holds_alternative<Marginalized>(io::parse_evidence_value(" ? ")));
  EXPECT_EQ(std::get<Complete>(io::parse_evidence_value("1.5")).value, 1.5);
  const auto iv = std::get<Interval>(io::parse_evidence_value("[-inf, 2]"));
  EXPECT_EQ(iv.lo, kNegInf);
  EXPECT_EQ(iv.hi, 2.0);
  EXPECT_EQ(std::get<DiscreteSubset>(io::parse_evidence_value("{2,0,2}")).states, (std::vector<int>{0, 2}));
  EXPECT_EQ(code_of([&] { io::parse_evidence_value("[1,"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { io::parse_evidence_value("abc"); }), ErrorCode::ParseError);
  for (const char* s : {"3", "[0,1]", "{0,1}", "[-inf,inf]"})
    EXPECT_EQ(io::format_evidence_value(io::parse_evidence_value(s)), s);
}

TEST(EvidenceText, Spec) {
  const SpnGraph g = load_fixture("four_sums.json");
  const std::string n0 = g.variable(0).name, n1 = g.variable(1).name;
  const Evidence e = io::parse_evidence_spec(g, n0 + "=1; " + n1 + " in {0,1}; 2=?");
  EXPECT_EQ(std::get<Complete>(e[0]).value, 1.0);
  EXPECT_EQ(std::get<DiscreteSubset>(e[1]).states, (std::vector<int>{0, 1}));
  EXPECT_TRUE(e.is_marginalized(2));
  EXPECT_EQ(code_of([&] { io::parse_evidence_spec(g, "Nope=1"); }), ErrorCode::UnknownVariable);
  EXPECT_EQ(code_of([&] { io::parse_evidence_spec(g, n0 + "=5"); }), ErrorCode::StateOutOfRange);
  EXPECT_EQ(code_of([&] { io::parse_evidence_spec(g, n0 + " in [0,1]"); }), ErrorCode::EvidenceTypeMismatch);
}

TEST(Csv, HeaderlessAndReordered) {
  const SpnGraph g = load_fixture("four_sums.json");
  const auto d = io::parse_csv(g, "0,1,?\n1,{0,1},0\n\n");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_TRUE(d.records[0].is_marginalized(2));
  EXPECT_EQ(std::get<DiscreteSubset>(d.records[1][1]).states, (std::vector<int>{0, 1}));

  const std::string header = g.variable(2).name + "," + g.variable(0).name + "," + g.variable(1).name;
  const auto r = io::parse_csv(g, header + "\n1,0,\n");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(std::get<Complete>(r.records[0][2]).value, 1.0);
  EXPECT_EQ(std::get<Complete>(r.records[0][0]).value, 0.0);
  EXPECT_TRUE(r.records[0].is_marginalized(1));

  const auto round = io::parse_csv(g, io::format_csv(g, d));
  EXPECT_EQ(round.records, d.records);
}

TEST(Csv, Errors) {
  const SpnGraph g = load_fixture("four_sums.json");
  EXPECT_EQ(code_of([&] { io::parse_csv(g, "0,1\n"); }), ErrorCode::SchemaMismatch);
  EXPECT_EQ(code_of([&] { io::parse_csv(g, "0,1,7\n"); }), ErrorCode::SchemaMismatch);
  EXPECT_EQ(code_of([&] { io::parse_csv(g, "0,1,x\n"); }), ErrorCode::ParseError);
  const std::string dup = g.variable(0).name + "," + g.variable(0).name + "," + g.variable(1).name;
  EXPECT_EQ(code_of([&] { io::parse_csv(g, dup + "\n"); }), ErrorCode::SchemaMismatch);
}
