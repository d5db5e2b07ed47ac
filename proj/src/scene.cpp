// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <set>
#include <string>

#include "attnlab/error.hpp"
#include "attnlab/harness.hpp"

namespace attnlab {

namespace {

// Unbiased draw in [0, n) from raw engine output; portable across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// First k entries of `items` become a uniform random k-subset in random order.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_below(rng, items.size() - i);
    std::swap(items[i], items[j]);
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<TokenId> Vocabulary::object_tokens() const {
  std::vector<TokenId> out(n_objects);
  for (std::size_t i = 0; i < n_objects; ++i) out[i] = static_cast<TokenId>(i);
  return out;
}

std::vector<TokenId> Vocabulary::background_tokens() const {
  std::vector<TokenId> out(n_background);
  for (std::size_t i = 0; i < n_background; ++i) out[i] = static_cast<TokenId>(n_objects + i);
  return out;
}

ObjectLexicon Vocabulary::lexicon() const {
  ObjectLexicon lex;
  for (TokenId t : object_tokens()) lex.emplace(t, static_cast<ObjectId>(t));
  return lex;
}

void Vocabulary::validate(std::size_t vocab_size) const {
  const std::size_t reserved = n_objects + n_background;
  if (n_objects == 0) throw DomainError("Vocabulary: need at least one object token");
  if (reserved > vocab_size) {
    throw DomainError("Vocabulary: " + std::to_string(reserved) +
                      " object/background tokens exceed model vocabulary " +
                      std::to_string(vocab_size));
  }
  std::set<TokenId> specials{bos, stop};
  if (specials.size() != 2) throw DomainError("Vocabulary: bos and stop must differ");
  for (TokenId t : specials) {
    if (t < reserved || t >= vocab_size) {
      throw DomainError("Vocabulary: control token " + std::to_string(t) +
                        " must lie above the object/background range and inside the vocabulary");
    }
  }
  if (describe_instruction.empty()) throw DomainError("Vocabulary: empty describe instruction");
  for (TokenId t : describe_instruction) {
    if (t >= vocab_size) throw DomainError("Vocabulary: describe token outside vocabulary");
  }
}

SyntheticScene gen_scene(std::uint64_t seed, std::size_t n_objects, std::size_t rows,
                         std::size_t cols, std::span<const TokenId> object_vocab,
                         std::span<const TokenId> background_vocab, const ObjectLexicon& lexicon) {
  const std::size_t cells = rows * cols;
  if (rows == 0 || cols == 0) throw DomainError("gen_scene: grid must be at least 1x1");
  if (n_objects > cells) {
    throw DomainError("gen_scene: " + std::to_string(n_objects) + " objects do not fit in " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (n_objects > object_vocab.size()) {
    throw DomainError("gen_scene: " + std::to_string(n_objects) + " objects requested from a vocabulary of " +
                      std::to_string(object_vocab.size()));
  }
  if (n_objects < cells && background_vocab.empty()) {
    throw DomainError("gen_scene: background cells but no background tokens");
  }

  std::mt19937_64 rng(seed);
  std::vector<TokenId> objects(object_vocab.begin(), object_vocab.end());
  partial_shuffle(objects, n_objects, rng);
  std::vector<std::size_t> slots(cells);
  for (std::size_t i = 0; i < cells; ++i) slots[i] = i;
  partial_shuffle(slots, n_objects, rng);

  SyntheticScene scene;
  scene.rows = rows;
  scene.cols = cols;
  scene.visual_tokens.assign(cells, 0);
  std::vector<bool> occupied(cells, false);
  for (std::size_t i = 0; i < n_objects; ++i) {
    scene.visual_tokens[slots[i]] = objects[i];
    occupied[slots[i]] = true;
  }
  for (std::size_t c = 0; c < cells; ++c) {
    if (!occupied[c]) {
      scene.visual_tokens[c] = background_vocab[uniform_below(rng, background_vocab.size())];
    }
  }
  scene.present_objects = extract_objects(scene.visual_tokens, lexicon);
  return scene;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) {
  return splitmix64(splitmix64(dataset_seed) ^ static_cast<std::uint64_t>(index));
}

}  // namespace attnlab
