#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>

namespace kgcrs {

enum class Err {
  MalformedTriple,
  DuplicateTriple,
  EntityRemoved,
  DimensionMismatch,
  NoNegativeAvailable,
  DivergenceDetected,
  EmptyCandidates,
  TargetNotCandidate,
  TargetHasNoAttributes,
  ActionAlreadyAsked,
  RecommendationOutsideCandidates,
  HistoryTooLong,
  AllActionsMasked,
  MissingLocation,
  EmptyLog,
  NoTestData,
  EmptySplit,
  ParseError,
  InvalidInput,
  CheckpointMismatch,
};

struct Error : std::runtime_error {
  Err code;
  Error(Err c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

[[noreturn]] inline void fail(Err c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool ok, Err c, const std::string& msg) {
  if (!ok) fail(c, msg);
}

enum class EntityKind : std::uint8_t { User = 0, Item = 1, Attribute = 2 };

inline const char* kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::User: return "user";
    case EntityKind::Item: return "item";
    default: return "attr";
  }
}

struct EntityId {
  EntityKind kind;
  int index;
  friend bool operator==(const EntityId&, const EntityId&) = default;
  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

inline EntityId user_id(int i) { return {EntityKind::User, i}; }
inline EntityId item_id(int i) { return {EntityKind::Item, i}; }
inline EntityId attr_id(int i) { return {EntityKind::Attribute, i}; }

// r0: user-item interaction, r1: item-attribute, r2: user-attribute preference.
enum class Relation : std::uint8_t { UserItem = 0, ItemAttr = 1, UserAttr = 2 };

constexpr int kNumRelations = 3;

inline EntityKind head_kind(Relation r) {
  return r == Relation::ItemAttr ? EntityKind::Item : EntityKind::User;
}

inline EntityKind tail_kind(Relation r) {
  return r == Relation::UserItem ? EntityKind::Item : EntityKind::Attribute;
}

inline const char* relation_name(Relation r) {
  switch (r) {
    case Relation::UserItem: return "r0";
    case Relation::ItemAttr: return "r1";
    default: return "r2";
  }
}

struct Triple {
  EntityId head;
  Relation rel;
  EntityId tail;
  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple& a, const Triple& b) {
    return std::tie(a.rel, a.head, a.tail) <=> std::tie(b.rel, b.head, b.tail);
  }
};

}  // namespace kgcrs
