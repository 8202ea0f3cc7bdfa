#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spn/augment.hpp"
#include "spn/em.hpp"
#include "spn/error.hpp"
#include "spn/evidence.hpp"
#include "spn/graph.hpp"

namespace spn::io {

using nlohmann::json;

/// Latent-variable annotations of an augmented model. Node ids refer to the
/// graph stored alongside.
struct LvBlock {
  std::size_t model_variables = 0;
  std::vector<LatentVariable> latents;
  std::size_t twin_link_edges = 0;
};

struct ModelFile {
  SpnGraph graph;
  std::optional<LvBlock> lv;
};

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& msg) { throw Error(ErrorCode::ParseError, msg); }

inline const json& field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) parse_fail(std::string("missing field '") + key + "'");
  return obj.at(key);
}

template <class T>
T get_as(const json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    parse_fail(std::string("bad value for '") + what + "'");
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s == "inf" || s == "+inf" || s == "Infinity" || s == "+Infinity") return kInf;
  if (s == "-inf" || s == "-Infinity") return kNegInf;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || std::isnan(v)) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(std::string_view s) {
  s = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Splits on `sep` outside [...] and {...}.
inline std::vector<std::string_view> split_outside_brackets(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '[' || c == '{') ++depth;
    else if ((c == ']' || c == '}') && depth > 0) --depth;
    else if (c == sep && depth == 0) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(s.substr(start));
  return out;
}

}  // namespace detail

/// One evidence value in the textual forms shared by CSV cells and the
/// --evidence syntax: empty or '?' (marginalized), '[lo,hi]', '{a,b,...}' or a
/// plain number.
inline VarEvidence parse_evidence_value(std::string_view text) {
  using detail::parse_fail;
  const std::string_view s = detail::trim(text);
  if (s.empty() || s == "?") return Marginalized{};
  if (s.front() == '[') {
    if (s.back() != ']') parse_fail("unterminated interval '" + std::string(s) + "'");
    const auto parts = detail::split_outside_brackets(s.substr(1, s.size() - 2), ',');
    if (parts.size() != 2) parse_fail("interval needs two bounds: '" + std::string(s) + "'");
    const auto lo = detail::parse_double(parts[0]);
    const auto hi = detail::parse_double(parts[1]);
    if (!lo || !hi) parse_fail("bad interval bound in '" + std::string(s) + "'");
    return Interval{*lo, *hi};
  }
  if (s.front() == '{') {
    if (s.back() != '}') parse_fail("unterminated subset '" + std::string(s) + "'");
    DiscreteSubset sub;
    const std::string_view inner = detail::trim(s.substr(1, s.size() - 2));
    if (!inner.empty()) {
      for (auto part : detail::split_outside_brackets(inner, ',')) {
        const auto v = detail::parse_int(part);
        if (!v) parse_fail("bad subset state in '" + std::string(s) + "'");
        sub.states.push_back(*v);
      }
    }
    std::sort(sub.states.begin(), sub.states.end());
    sub.states.erase(std::unique(sub.states.begin(), sub.states.end()), sub.states.end());
    return sub;
  }
  const auto v = detail::parse_double(s);
  if (!v || !std::isfinite(*v)) parse_fail("bad value '" + std::string(s) + "'");
  return Complete{*v};
}

/// Parses "A=1; B in [0,2]; C in {0,1}; D=?" against the graph's variable
/// names (or numeric ids). Unmentioned variables are marginalized.
inline Evidence parse_evidence_spec(const SpnGraph& g, std::string_view spec) {
  Evidence e(g.num_variables());
  for (auto item : detail::split_outside_brackets(spec, ';')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    std::string_view name, value;
    if (const auto eq = item.find('='); eq != std::string_view::npos) {
      name = detail::trim(item.substr(0, eq));
      value = item.substr(eq + 1);
    } else if (const auto in = item.find(" in "); in != std::string_view::npos) {
      name = detail::trim(item.substr(0, in));
      value = item.substr(in + 4);
      const auto v = detail::trim(value);
      if (v.empty() || (v.front() != '[' && v.front() != '{'))
        detail::parse_fail("'in' expects an interval or a subset: '" + std::string(item) + "'");
    } else {
      detail::parse_fail("cannot parse evidence item '" + std::string(item) + "'");
    }
    std::optional<VarId> var = g.find_variable(name);
    if (!var) {
      if (auto id = detail::parse_int(name); id && *id >= 0 && static_cast<std::size_t>(*id) < g.num_variables())
        var = static_cast<VarId>(*id);
    }
    if (!var) throw Error(ErrorCode::UnknownVariable, std::string(name));
    e.set(*var, parse_evidence_value(value));
  }
  check_evidence(g, e);
  return e;
}

// ---------------------------------------------------------------- models

inline json variables_to_json(const std::vector<Variable>& vars) {
  json out = json::array();
  for (const auto& v : vars) {
    json j{{"id", v.id}, {"name", v.name}, {"kind", v.is_discrete() ? "discrete" : "continuous"}};
    if (v.is_discrete()) j["cardinality"] = v.cardinality;
    out.push_back(std::move(j));
  }
  return out;
}

inline json to_json(const SpnGraph& g, const std::optional<LvBlock>& lv = std::nullopt) {
  json nodes = json::array();
  for (NodeId n = 0; n < g.size(); ++n) {
    const Node& node = g.node(n);
    json j{{"id", n}};
    if (node.is_sum()) {
      j["type"] = "sum";
      j["children"] = node.sum().children;
      j["weights"] = node.sum().weights;
    } else if (node.is_product()) {
      j["type"] = "product";
      j["children"] = node.product().children;
    } else if (node.is_indicator()) {
      j["type"] = "indicator";
      j["var"] = node.indicator().var;
      j["state"] = node.indicator().state;
    } else {
      j["type"] = "gaussian";
      j["var"] = node.gaussian().var;
      j["mean"] = node.gaussian().mean;
      j["variance"] = node.gaussian().variance;
    }
    nodes.push_back(std::move(j));
  }
  json doc{{"format", 1}, {"variables", variables_to_json(g.variables())}, {"nodes", std::move(nodes)}, {"root", g.root()}};
  if (lv) {
    json latents = json::array();
    for (const auto& l : lv->latents) {
      json j{{"var", l.var}, {"sum", l.sum}, {"source_sum", l.original_sum}, {"links", l.links},
             {"indicators", l.indicators}};
      j["twin"] = l.twin ? json(*l.twin) : json(nullptr);
      j["twin_weights"] = l.twin_weights;
      latents.push_back(std::move(j));
    }
    doc["lv"] = json{{"model_variables", lv->model_variables}, {"twin_link_edges", lv->twin_link_edges},
                     {"latents", std::move(latents)}};
  }
  return doc;
}

inline LvBlock lv_block(const AugmentedSpn& aug) {
  return LvBlock{aug.model_variable_count, aug.latents, aug.twin_link_edges};
}

inline std::string dump_model(const SpnGraph& g, const std::optional<LvBlock>& lv = std::nullopt) {
  return to_json(g, lv).dump(2) + "\n";
}

/// Builds a graph from a parsed model document. Node ids in the file are
/// arbitrary distinct integers; the nodes are topologically sorted here, so
/// cycles and dangling references are reported instead of assumed away.
inline ModelFile from_json(const json& doc) {
  using detail::field;
  using detail::get_as;
  using detail::parse_fail;
  if (!doc.is_object()) parse_fail("model must be a JSON object");
  if (doc.contains("format") && get_as<int>(doc["format"], "format") != 1) parse_fail("unsupported model format");

  const json& jvars = field(doc, "variables");
  if (!jvars.is_array()) parse_fail("'variables' must be an array");
  std::vector<Variable> vars(jvars.size());
  std::vector<char> have(jvars.size(), 0);
  for (const auto& jv : jvars) {
    const auto id = get_as<long long>(field(jv, "id"), "variable id");
    if (id < 0 || static_cast<std::size_t>(id) >= vars.size() || have[id])
      parse_fail("variable ids must be 0..N-1 without repeats");
    have[id] = 1;
    Variable& v = vars[id];
    v.id = static_cast<VarId>(id);
    v.name = jv.contains("name") ? get_as<std::string>(jv["name"], "name") : "X" + std::to_string(id);
    const std::string kind = jv.contains("kind") ? get_as<std::string>(jv["kind"], "kind") : "discrete";
    if (kind == "discrete") {
      v.kind = VarKind::discrete;
      v.cardinality = get_as<int>(field(jv, "cardinality"), "cardinality");
      if (v.cardinality < 1) parse_fail("cardinality must be positive for " + v.name);
    } else if (kind == "continuous") {
      v.kind = VarKind::continuous;
      v.cardinality = 0;
    } else {
      parse_fail("unknown variable kind '" + kind + "'");
    }
  }
  std::map<std::string, VarId> by_name;
  for (const auto& v : vars)
    if (!by_name.emplace(v.name, v.id).second) parse_fail("duplicate variable name " + v.name);

  auto var_ref = [&](const json& j) -> VarId {
    if (j.is_string()) {
      const auto it = by_name.find(j.get<std::string>());
      if (it == by_name.end()) throw Error(ErrorCode::UnknownReference, "variable " + j.get<std::string>());
      return it->second;
    }
    const auto id = get_as<long long>(j, "var");
    if (id < 0 || static_cast<std::size_t>(id) >= vars.size())
      throw Error(ErrorCode::UnknownReference, "variable " + std::to_string(id));
    return static_cast<VarId>(id);
  };

  const json& jnodes = field(doc, "nodes");
  if (!jnodes.is_array()) parse_fail("'nodes' must be an array");
  std::map<long long, std::size_t> index;  // file id -> position in jnodes
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const auto id = get_as<long long>(field(jnodes[i], "id"), "node id");
    if (!index.emplace(id, i).second) parse_fail("duplicate node id " + std::to_string(id));
  }
  std::vector<std::vector<std::size_t>> kids(jnodes.size());
  std::vector<std::string> types(jnodes.size());
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    types[i] = get_as<std::string>(field(jnodes[i], "type"), "type");
    if (types[i] == "sum" || types[i] == "product") {
      const json& jc = field(jnodes[i], "children");
      if (!jc.is_array()) parse_fail("'children' must be an array");
      for (const auto& c : jc) {
        const auto cid = get_as<long long>(c, "child");
        const auto it = index.find(cid);
        if (it == index.end()) throw Error(ErrorCode::UnknownReference, "child " + std::to_string(cid));
        kids[i].push_back(it->second);
      }
    } else if (types[i] != "indicator" && types[i] != "gaussian") {
      parse_fail("unknown node type '" + types[i] + "'");
    }
  }

  // Iterative DFS post-order; a grey node met again closes a cycle.
  std::vector<char> color(jnodes.size(), 0);
  std::vector<std::size_t> order;
  for (std::size_t start = 0; start < jnodes.size(); ++start) {
    if (color[start]) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
    color[start] = 1;
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < kids[n].size()) {
        const std::size_t c = kids[n][next++];
        if (color[c] == 1) throw Error(ErrorCode::CycleDetected, "cycle through node " + jnodes[c]["id"].dump());
        if (color[c] == 0) {
          color[c] = 1;
          stack.emplace_back(c, 0);
        }
      } else {
        color[n] = 2;
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  const auto root_id = get_as<long long>(field(doc, "root"), "root");
  const auto root_it = index.find(root_id);
  if (root_it == index.end()) throw Error(ErrorCode::UnknownReference, "root " + std::to_string(root_id));

  GraphBuilder b(vars);
  std::vector<NodeId> builder_id(jnodes.size());
  for (std::size_t i : order) {
    const json& jn = jnodes[i];
    if (types[i] == "indicator") {
      builder_id[i] = b.add_indicator(var_ref(field(jn, "var")), get_as<int>(field(jn, "state"), "state"));
    } else if (types[i] == "gaussian") {
      builder_id[i] = b.add_gaussian(var_ref(field(jn, "var")), get_as<double>(field(jn, "mean"), "mean"),
                                     get_as<double>(field(jn, "variance"), "variance"));
    } else {
      std::vector<NodeId> ch;
      for (std::size_t c : kids[i]) ch.push_back(builder_id[c]);
      if (types[i] == "product") {
        builder_id[i] = b.add_product(std::move(ch));
      } else if (jn.contains("weights")) {
        builder_id[i] = b.add_sum(std::move(ch), get_as<std::vector<double>>(jn["weights"], "weights"));
      } else if (jn.contains("log_weights")) {
        std::vector<double> w;
        for (double lw : get_as<std::vector<double>>(jn["log_weights"], "log_weights")) w.push_back(std::exp(lw));
        builder_id[i] = b.add_sum(std::move(ch), std::move(w));
      } else {
        builder_id[i] = b.add_sum(std::move(ch));
      }
    }
  }

  // The builder only keeps nodes up to and including the root id, so the
  // nodes are re-added with the root's sub-DAG last.
  GraphBuilder sub(vars);
  std::vector<std::optional<NodeId>> sub_id(b.size());
  {
    std::vector<char> reach(b.size(), 0);
    reach[builder_id[root_it->second]] = 1;
    for (NodeId n = b.size(); n-- > 0;)
      if (reach[n])
        for (NodeId c : b.node(n).children()) reach[c] = 1;
    for (NodeId n = 0; n < b.size(); ++n) {
      if (!reach[n]) continue;
      Node node = b.node(n);
      if (auto* s = std::get_if<SumNode>(&node.payload)) {
        std::vector<NodeId> ch;
        for (NodeId c : s->children) ch.push_back(*sub_id[c]);
        sub_id[n] = sub.add_sum(std::move(ch), s->weights);
      } else if (auto* p = std::get_if<ProductNode>(&node.payload)) {
        std::vector<NodeId> ch;
        for (NodeId c : p->children) ch.push_back(*sub_id[c]);
        sub_id[n] = sub.add_product(std::move(ch));
      } else if (auto* ind = std::get_if<IndicatorLeaf>(&node.payload)) {
        sub_id[n] = sub.add_indicator(ind->var, ind->state);
      } else {
        const auto& gl = std::get<GaussianLeaf>(node.payload);
        sub_id[n] = sub.add_gaussian(gl.var, gl.mean, gl.variance);
      }
    }
  }
  const NodeId sub_root = *sub_id[builder_id[root_it->second]];
  if (sub_root + 1 != sub.size()) throw Error(ErrorCode::InvalidArgument, "root is not last after sorting");
  auto built = sub.build_with_map(sub_root);

  ModelFile mf;
  mf.graph = std::move(built.graph);
  if (doc.contains("lv") && !doc["lv"].is_null()) {
    auto final_id = [&](const json& j) -> NodeId {
      const auto fid = get_as<long long>(j, "lv node");
      const auto it = index.find(fid);
      if (it == index.end()) throw Error(ErrorCode::UnknownReference, "lv node " + std::to_string(fid));
      const auto s = sub_id[builder_id[it->second]];
      if (!s || !built.new_id[*s]) throw Error(ErrorCode::UnknownReference, "lv node " + std::to_string(fid) + " pruned");
      return *built.new_id[*s];
    };
    const json& jl = doc["lv"];
    LvBlock lv;
    lv.model_variables = get_as<std::size_t>(field(jl, "model_variables"), "model_variables");
    if (jl.contains("twin_link_edges")) lv.twin_link_edges = get_as<std::size_t>(jl["twin_link_edges"], "twin_link_edges");
    for (const auto& j : field(jl, "latents")) {
      LatentVariable l;
      l.var = var_ref(field(j, "var"));
      l.sum = final_id(field(j, "sum"));
      l.original_sum = j.contains("source_sum") ? get_as<NodeId>(j["source_sum"], "source_sum") : l.sum;
      for (const auto& x : field(j, "links")) l.links.push_back(final_id(x));
      if (j.contains("indicators"))
        for (const auto& x : j["indicators"]) l.indicators.push_back(final_id(x));
      if (j.contains("twin") && !j["twin"].is_null()) l.twin = final_id(j["twin"]);
      if (j.contains("twin_weights")) l.twin_weights = get_as<std::vector<double>>(j["twin_weights"], "twin_weights");
      lv.latents.push_back(std::move(l));
    }
    mf.lv = std::move(lv);
  }
  return mf;
}

inline ModelFile parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return from_json(doc);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
  out << text;
}

inline ModelFile load_model(const std::string& path) { return parse_model(read_file(path)); }

inline void save_model(const std::string& path, const SpnGraph& g, const std::optional<LvBlock>& lv = std::nullopt) {
  write_file(path, dump_model(g, lv));
}

// ---------------------------------------------------------------- datasets

/// CSV with one record per line and one column per variable. An optional
/// header of variable names may reorder the columns; without a header the
/// columns follow variable ids.
inline Dataset parse_csv(const SpnGraph& g, std::string_view text) {
  Dataset data{g.num_variables(), {}};
  std::vector<std::size_t> column_var;
  bool first = true;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_outside_brackets(line, ',');
    if (first) {
      first = false;
      std::vector<std::size_t> mapping;
      bool header = true;
      for (auto c : cells) {
        const auto v = g.find_variable(detail::trim(c));
        if (!v) {
          header = false;
          break;
        }
        mapping.push_back(*v);
      }
      if (header) {
        std::vector<char> used(g.num_variables(), 0);
        for (auto v : mapping) {
          if (used[v]) throw Error(ErrorCode::SchemaMismatch, "duplicate column " + g.variable(v).name);
          used[v] = 1;
        }
        if (mapping.size() != g.num_variables())
          throw Error(ErrorCode::SchemaMismatch, "header names " + std::to_string(mapping.size()) + " of " +
                                                     std::to_string(g.num_variables()) + " variables");
        column_var = std::move(mapping);
        continue;
      }
      column_var.resize(g.num_variables());
      for (std::size_t i = 0; i < column_var.size(); ++i) column_var[i] = i;
    }
    if (cells.size() != column_var.size())
      throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(line_no) + " has " +
                                                 std::to_string(cells.size()) + " cells, expected " +
                                                 std::to_string(column_var.size()));
    Evidence e(g.num_variables());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        e.set(column_var[i], parse_evidence_value(cells[i]));
      } catch (const Error& err) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + err.what());
      }
    }
    try {
      check_evidence(g, e);
    } catch (const Error& err) {
      throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(line_no) + ": " + err.what());
    }
    data.add(std::move(e));
  }
  return data;
}

inline Dataset load_csv(const SpnGraph& g, const std::string& path) { return parse_csv(g, read_file(path)); }

inline std::string format_evidence_value(const VarEvidence& ev) {
  std::ostringstream os;
  os.precision(17);
  if (const auto* c = std::get_if<Complete>(&ev)) {
    os << c->value;
  } else if (const auto* iv = std::get_if<Interval>(&ev)) {
    auto bound = [&](double x) {
      if (x == kInf) os << "inf";
      else if (x == kNegInf) os << "-inf";
      else os << x;
    };
    os << '[';
    bound(iv->lo);
    os << ',';
    bound(iv->hi);
    os << ']';
  } else if (const auto* s = std::get_if<DiscreteSubset>(&ev)) {
    os << '{';
    for (std::size_t i = 0; i < s->states.size(); ++i) os << (i ? "," : "") << s->states[i];
    os << '}';
  }
  return os.str();
}

/// Writes a dataset with a header row.
inline std::string format_csv(const SpnGraph& g, const Dataset& data) {
  std::string out;
  for (const auto& v : g.variables()) out += (v.id ? "," : "") + v.name;
  out += '\n';
  for (const auto& r : data.records) {
    for (VarId v = 0; v < r.size(); ++v) out += (v ? "," : "") + format_evidence_value(r[v]);
    out += '\n';
  }
  return out;
}

}  // namespace spn::io
