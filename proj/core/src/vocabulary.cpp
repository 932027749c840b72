#include "snmt/vocabulary.hpp"

#include <fstream>
#include <stdexcept>

namespace snmt {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
  add(kEosToken);
}

int Vocabulary::add(const std::string& token, bool is_tag) {
  if (token.empty()) throw std::invalid_argument("vocabulary: empty token");
  auto& index = is_tag ? tag_index_ : word_index_;
  if (auto it = index.find(token); it != index.end()) return it->second;
  // Tags come after every word so the token file keeps one contiguous tag block.
  if (!is_tag && !tag_index_.empty())
    throw std::logic_error("vocabulary: words must be added before tags");
  const int id = static_cast<int>(entries_.size());
  entries_.push_back({token, is_tag});
  index.emplace(token, id);
  if (is_tag && token == kUnkTagToken) unk_tag_ = id;
  return id;
}

bool Vocabulary::contains(const std::string& token, bool is_tag) const {
  const auto& index = is_tag ? tag_index_ : word_index_;
  return index.count(token) > 0;
}

int Vocabulary::id(const std::string& token, bool is_tag) const {
  const auto& index = is_tag ? tag_index_ : word_index_;
  if (auto it = index.find(token); it != index.end()) return it->second;
  if (is_tag && unk_tag_ >= 0) return unk_tag_;
  return kUnk;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size())
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return entries_[static_cast<std::size_t>(id)].token;
}

bool Vocabulary::is_tag(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) return false;
  return entries_[static_cast<std::size_t>(id)].is_tag;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens, bool is_tag) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t, is_tag));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token(id));
  return tokens;
}

std::uint64_t Vocabulary::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& e : entries_) {
    for (char c : e.token) mix(static_cast<unsigned char>(c));
    mix(0);
    mix(e.is_tag ? 1 : 2);
  }
  return h;
}

void Vocabulary::save(const std::string& token_path, const std::string& tag_path) const {
  std::ofstream tokens(token_path, std::ios::binary);
  std::ofstream tags(tag_path, std::ios::binary);
  if (!tokens) throw std::runtime_error("cannot write vocabulary: " + token_path);
  if (!tags) throw std::runtime_error("cannot write vocabulary tags: " + tag_path);
  for (std::size_t i = kReserved; i < entries_.size(); ++i) {
    tokens << entries_[i].token << '\n';
    if (entries_[i].is_tag) tags << entries_[i].token << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& token_path, const std::string& tag_path) {
  std::ifstream tokens(token_path, std::ios::binary);
  if (!tokens) throw std::runtime_error("cannot read vocabulary: " + token_path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(tokens, line);) lines.push_back(line);

  std::vector<std::string> tag_lines;
  if (std::ifstream tags(tag_path, std::ios::binary); tags) {
    for (std::string line; std::getline(tags, line);) tag_lines.push_back(line);
  } else {
    throw std::runtime_error("cannot read vocabulary tags: " + tag_path);
  }
  if (tag_lines.size() > lines.size())
    throw std::runtime_error(tag_path + ": more tags than vocabulary entries");

  const std::size_t first_tag = lines.size() - tag_lines.size();
  Vocabulary v;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool tag = i >= first_tag;
    if (tag && lines[i] != tag_lines[i - first_tag])
      throw std::runtime_error(tag_path + ": tag block does not match the tail of " + token_path);
    v.add(lines[i], tag);
  }
  if (v.size() != lines.size() + kReserved)
    throw std::runtime_error(token_path + ": duplicate tokens within a partition");
  return v;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].token != other.entries_[i].token || entries_[i].is_tag != other.entries_[i].is_tag)
      return false;
  return true;
}

}  // namespace snmt
