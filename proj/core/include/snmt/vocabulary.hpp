#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace snmt {

/// Token <-> id map with a word partition and a tag partition. The same
/// string may appear once in each partition under different ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr std::size_t kReserved = 3;

  static inline const std::string kPadToken = "<pad>";
  static inline const std::string kUnkToken = "<unk>";
  static inline const std::string kEosToken = "</s>";
  static inline const std::string kUnkTagToken = "<unk-tag>";

  Vocabulary();

  /// Adds a token if absent; returns its id.
  int add(const std::string& token, bool is_tag = false);

  std::size_t size() const { return entries_.size(); }
  std::size_t tag_count() const { return tag_index_.size(); }
  std::size_t word_count() const { return word_index_.size(); }

  bool contains(const std::string& token, bool is_tag = false) const;
  /// Unknown words map to kUnk; unknown tags map to the UNK-TAG entry when present.
  int id(const std::string& token, bool is_tag = false) const;
  const std::string& token(int id) const;
  bool is_tag(int id) const;
  bool is_reserved(int id) const { return id >= 0 && static_cast<std::size_t>(id) < kReserved; }
  int unk_tag_id() const { return unk_tag_; }

  std::vector<int> encode(std::span<const std::string> tokens, bool is_tag = false) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  /// FNV-1a over the entries; identifies vocabularies inside checkpoints.
  std::uint64_t content_hash() const;

  /// Writes the token file (one non-reserved token per line, words first,
  /// then tags) and the tag-partition file listing the tag block.
  void save(const std::string& token_path, const std::string& tag_path) const;
  static Vocabulary load(const std::string& token_path, const std::string& tag_path);

  bool operator==(const Vocabulary& other) const;

 private:
  struct Entry {
    std::string token;
    bool is_tag;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> word_index_;
  std::unordered_map<std::string, int> tag_index_;
  int unk_tag_ = -1;
};

}  // namespace snmt
