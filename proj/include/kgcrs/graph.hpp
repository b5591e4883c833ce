#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kgcrs/types.hpp"

namespace kgcrs {

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a_int(std::int64_t v, std::uint64_t h) { return fnv1a(&v, sizeof(v), h); }

struct Neighbor {
  Relation rel;
  EntityId nbr;
  bool outgoing;  // true when the queried entity is the triple's head
  int triple_id;
};

// Tripartite KG over users, items and attributes. The base structure is immutable and
// shared between copies; each instance carries its own removed-entity overlay so a
// session can prune the graph without touching the global one.
class KnowledgeGraph {
 public:
  KnowledgeGraph() : core_(empty_core()) {}

  static KnowledgeGraph build(const std::array<int, 3>& counts, std::vector<Triple> triples) {
    KnowledgeGraph g;
    g.core_ = make_core(counts, std::move(triples));
    g.removed_.assign(g.core_->total, 0);
    return g;
  }

  // Counts derived from the largest index seen per kind.
  static KnowledgeGraph build(const std::vector<Triple>& triples) {
    std::array<int, 3> counts{0, 0, 0};
    for (const Triple& t : triples) {
      auto bump = [&](EntityId e) {
        int& c = counts[static_cast<int>(e.kind)];
        c = std::max(c, e.index + 1);
      };
      bump(t.head);
      bump(t.tail);
    }
    return build(counts, triples);
  }

  int n_users() const { return core_->counts[0]; }
  int n_items() const { return core_->counts[1]; }
  int n_attrs() const { return core_->counts[2]; }
  int total_entities() const { return core_->total; }
  int count(EntityKind k) const { return core_->counts[static_cast<int>(k)]; }

  int gid(EntityId e) const {
    require(e.index >= 0 && e.index < count(e.kind), Err::MalformedTriple,
            "entity index out of range");
    return core_->offset[static_cast<int>(e.kind)] + e.index;
  }

  EntityId eid(int gid) const {
    for (int k = 2; k >= 0; --k)
      if (gid >= core_->offset[k])
        return {static_cast<EntityKind>(k), gid - core_->offset[k]};
    return {EntityKind::User, gid};
  }

  const std::vector<Triple>& triples() const { return core_->triples; }
  std::uint64_t fingerprint() const { return core_->fingerprint; }

  bool is_removed(EntityId e) const { return removed_[gid(e)] != 0; }
  bool is_removed_gid(int g) const { return removed_[g] != 0; }
  int removed_count() const { return removed_count_; }

  // Triple participates in session computations only while both endpoints are present.
  bool triple_effective(int triple_id) const {
    const Triple& t = core_->triples[triple_id];
    return !is_removed(t.head) && !is_removed(t.tail);
  }

  void remove_entity(EntityId e) {
    int g = gid(e);
    if (!removed_[g]) {
      removed_[g] = 1;
      ++removed_count_;
    }
  }

  template <class Container>
  void remove_entities(const Container& es) {
    for (const EntityId& e : es) remove_entity(e);
  }

  void reset_session() {
    std::fill(removed_.begin(), removed_.end(), 0);
    removed_count_ = 0;
  }

  // Effective neighborhood, removal-filtered, in deterministic (relation, index) order.
  std::vector<Neighbor> neighbors(EntityId e) const {
    require(!is_removed(e), Err::EntityRemoved, "neighbors: entity removed");
    std::vector<Neighbor> out;
    for (const Edge& ed : core_->adj[gid(e)]) {
      if (removed_[ed.nbr]) continue;
      out.push_back({ed.rel, eid(ed.nbr), ed.outgoing, ed.triple_id});
    }
    return out;
  }

  struct Edge {
    Relation rel;
    int nbr;  // global id
    bool outgoing;
    int triple_id;
  };

  // Raw adjacency (includes edges to removed entities); hot paths filter via is_removed_gid.
  const std::vector<Edge>& adj(int gid) const { return core_->adj[gid]; }

  bool has_edge(EntityId h, Relation r, EntityId t) const {
    const auto& es = core_->adj[gid(h)];
    int tg = gid(t);
    for (const Edge& e : es)
      if (e.rel == r && e.nbr == tg && e.outgoing) return true;
    return false;
  }

  // Base-structure maps (ignore removal overlay; the simulator's ground truth).
  const std::vector<int>& item_attrs(int item) const { return core_->item_attrs[item]; }
  const std::vector<int>& attr_items(int attr) const { return core_->attr_items[attr]; }
  const std::vector<int>& user_items(int user) const { return core_->user_items[user]; }
  const std::vector<int>& user_attrs(int user) const { return core_->user_attrs[user]; }

 private:
  struct Core {
    std::array<int, 3> counts{0, 0, 0};
    std::array<int, 3> offset{0, 0, 0};
    int total = 0;
    std::vector<Triple> triples;
    std::vector<std::vector<Edge>> adj;
    std::vector<std::vector<int>> item_attrs, attr_items, user_items, user_attrs;
    std::uint64_t fingerprint = 0;
  };

  static std::shared_ptr<const Core> empty_core() {
    static const std::shared_ptr<const Core> c = std::make_shared<Core>();
    return c;
  }

  static std::shared_ptr<const Core> make_core(const std::array<int, 3>& counts,
                                               std::vector<Triple> triples) {
    auto core = std::make_shared<Core>();
    core->counts = counts;
    core->offset = {0, counts[0], counts[0] + counts[1]};
    core->total = counts[0] + counts[1] + counts[2];
    for (const Triple& t : triples) {
      require(t.head.kind == head_kind(t.rel) && t.tail.kind == tail_kind(t.rel),
              Err::MalformedTriple, "triple kinds do not match relation");
      require(t.head.index >= 0 && t.head.index < counts[static_cast<int>(t.head.kind)] &&
                  t.tail.index >= 0 && t.tail.index < counts[static_cast<int>(t.tail.kind)],
              Err::MalformedTriple, "triple index out of range");
    }
    std::sort(triples.begin(), triples.end());
    for (std::size_t i = 1; i < triples.size(); ++i)
      require(!(triples[i] == triples[i - 1]), Err::DuplicateTriple, "duplicate triple");
    core->triples = std::move(triples);

    core->adj.resize(core->total);
    core->item_attrs.resize(counts[1]);
    core->attr_items.resize(counts[2]);
    core->user_items.resize(counts[0]);
    core->user_attrs.resize(counts[0]);
    auto off = [&](EntityId e) { return core->offset[static_cast<int>(e.kind)] + e.index; };
    for (int i = 0; i < static_cast<int>(core->triples.size()); ++i) {
      const Triple& t = core->triples[i];
      core->adj[off(t.head)].push_back({t.rel, off(t.tail), true, i});
      core->adj[off(t.tail)].push_back({t.rel, off(t.head), false, i});
      switch (t.rel) {
        case Relation::UserItem: core->user_items[t.head.index].push_back(t.tail.index); break;
        case Relation::ItemAttr:
          core->item_attrs[t.head.index].push_back(t.tail.index);
          core->attr_items[t.tail.index].push_back(t.head.index);
          break;
        case Relation::UserAttr: core->user_attrs[t.head.index].push_back(t.tail.index); break;
      }
    }
    for (auto& es : core->adj)
      std::sort(es.begin(), es.end(), [](const Edge& a, const Edge& b) {
        if (a.rel != b.rel) return a.rel < b.rel;
        if (a.nbr != b.nbr) return a.nbr < b.nbr;
        return a.outgoing < b.outgoing;
      });
    for (auto* m : {&core->item_attrs, &core->attr_items, &core->user_items, &core->user_attrs})
      for (auto& v : *m) std::sort(v.begin(), v.end());

    std::uint64_t h = 14695981039346656037ull;
    for (int c : core->counts) h = fnv1a_int(c, h);
    for (const Triple& t : core->triples) {
      h = fnv1a_int(static_cast<int>(t.rel), h);
      h = fnv1a_int(t.head.index, h);
      h = fnv1a_int(t.tail.index, h);
    }
    core->fingerprint = h;
    return core;
  }

  std::shared_ptr<const Core> core_;
  std::vector<std::uint8_t> removed_;
  int removed_count_ = 0;
};

// --- Triple TSV: "<kind>:<index>\t<r0|r1|r2>\t<kind>:<index>", '#' comments. ---

inline EntityId parse_entity(const std::string& tok, int line_no) {
  auto colon = tok.find(':');
  require(colon != std::string::npos, Err::MalformedTriple,
          "line " + std::to_string(line_no) + ": expected <kind>:<index>");
  std::string k = tok.substr(0, colon);
  EntityKind kind;
  if (k == "user") kind = EntityKind::User;
  else if (k == "item") kind = EntityKind::Item;
  else if (k == "attr") kind = EntityKind::Attribute;
  else fail(Err::MalformedTriple, "line " + std::to_string(line_no) + ": unknown kind '" + k + "'");
  try {
    std::size_t pos = 0;
    int idx = std::stoi(tok.substr(colon + 1), &pos);
    require(pos == tok.size() - colon - 1 && idx >= 0, Err::MalformedTriple,
            "line " + std::to_string(line_no) + ": bad index");
    return {kind, idx};
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(Err::MalformedTriple, "line " + std::to_string(line_no) + ": bad index");
  }
}

inline std::vector<Triple> read_triples(std::istream& in) {
  std::vector<Triple> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string h, r, t, extra;
    std::getline(ss, h, '\t');
    std::getline(ss, r, '\t');
    if (!std::getline(ss, t, '\t'))
      fail(Err::MalformedTriple, "line " + std::to_string(line_no) + ": expected 3 fields");
    require(!std::getline(ss, extra, '\t'), Err::MalformedTriple,
            "line " + std::to_string(line_no) + ": expected 3 fields");
    Relation rel;
    if (r == "r0") rel = Relation::UserItem;
    else if (r == "r1") rel = Relation::ItemAttr;
    else if (r == "r2") rel = Relation::UserAttr;
    else fail(Err::MalformedTriple, "line " + std::to_string(line_no) + ": unknown relation '" + r + "'");
    Triple tr{parse_entity(h, line_no), rel, parse_entity(t, line_no)};
    require(tr.head.kind == head_kind(rel) && tr.tail.kind == tail_kind(rel), Err::MalformedTriple,
            "line " + std::to_string(line_no) + ": kinds do not match relation");
    out.push_back(tr);
  }
  return out;
}

inline void write_triples(std::ostream& os, const std::vector<Triple>& triples) {
  for (const Triple& t : triples)
    os << kind_name(t.head.kind) << ':' << t.head.index << '\t' << relation_name(t.rel) << '\t'
       << kind_name(t.tail.kind) << ':' << t.tail.index << '\n';
}

}  // namespace kgcrs
