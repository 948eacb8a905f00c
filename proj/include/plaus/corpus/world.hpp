#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/corpus/vocab.hpp"

namespace plaus {

struct WorldConfig {
  std::uint64_t seed = 1;
  std::size_t n_statements = 4000;
  // Vocabulary budget: how many categories and entities per category to draw
  // from the built-in lexicon (at most 10 and 5).
  int n_categories = 10;
  int entities_per_category = 5;
  int n_verbs = 17;
  // Chance that a rendering uses a non-canonical synonym instead of the
  // canonical noun or verb form.
  double synonym_rate = 0.1;
  // Chance that an entity flips its category's default for one (verb, role).
  double exception_rate = 0.015;
  double adjective_rate = 0.3;
  double inference2_fraction = 0.25;
  // Share of the remaining pool held out as inference1.
  double inference1_fraction = 0.2;

  void validate() const;
  bool operator==(const WorldConfig&) const = default;
};

struct Entity {
  std::string name;
  int category = 0;
  std::vector<std::string> forms;  // synonyms; forms[0] is canonical
};

struct VerbForm {
  std::vector<std::string> inflected;  // "soaks up"
  std::vector<std::string> base;       // "soak up"
};

struct Verb {
  std::string name;
  std::vector<VerbForm> forms;
};

struct Category {
  std::string name;
  std::string noun;  // used in reasoning statements
};

struct CapabilityRule {
  int entity = 0;
  int verb = 0;
  Role role = Role::subject;  // subject = can act, object = can undergo
  bool allowed = false;
};

// One concrete surface rendering of a (subject, verb, object) triple.
struct Rendering {
  int subject = 0, verb = 0, object = 0;
  int subject_form = 0, verb_form = 0, object_form = 0;
  int subject_adj = -1, object_adj = -1;  // -1: no adjective
  bool subject_definite = true, object_definite = true;
  bool operator==(const Rendering&) const = default;
};

class World {
 public:
  explicit World(const WorldConfig& cfg);

  const WorldConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<Category>& categories() const { return categories_; }
  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Verb>& verbs() const { return verbs_; }
  const std::vector<std::string>& adjectives() const { return adjectives_; }

  bool category_can_act(int category, int verb) const;
  bool category_can_undergo(int category, int verb) const;
  bool can_act(int entity, int verb) const;
  bool can_undergo(int entity, int verb) const;
  bool plausible(int subject, int verb, int object) const;
  // The full declared capability table, one rule per (entity, verb, role).
  std::vector<CapabilityRule> rules() const;

  SvoStatement render(const Rendering& r, std::string id) const;
  // Inverse of render for ordinary statements; nullopt if the text is not one.
  std::optional<Rendering> analyze(const SvoStatement& s) const;
  Label gold(const Rendering& r) const;

  // Builds a statement from word groups and tokenizes it.
  SvoStatement assemble(std::string id, const std::vector<std::string>& before,
                        const std::vector<std::string>& subject, const std::vector<std::string>& verb,
                        const std::vector<std::string>& mid, const std::vector<std::string>& object,
                        std::optional<Label> label) const;

  std::vector<std::string> subject_words(const Rendering& r) const;
  std::vector<std::string> object_words(const Rendering& r) const;
  std::vector<std::string> noun_phrase(int entity, int form, int adj) const;

 private:
  WorldConfig cfg_;
  std::vector<Category> categories_;
  std::vector<Entity> entities_;
  std::vector<Verb> verbs_;
  std::vector<std::string> adjectives_;
  std::vector<std::vector<bool>> cat_act_, cat_undergo_;  // [category][verb]
  std::vector<std::vector<bool>> act_, undergo_;          // [entity][verb]
  Vocabulary vocab_;
};

struct GeneratedWorld {
  World world;
  SplitSet splits;
};

// Throws GenerationError when the world cannot supply a balanced, duplicate-free
// sample of the requested size.
GeneratedWorld generate_world(const WorldConfig& cfg);

struct ProbeSet {
  std::vector<ProbeItem> items;
  std::size_t n_sources = 0;  // mispredicted inference2 statements
  bool empty() const { return items.empty(); }
};

// predictions[i] is the base model's label for inference2[i].
ProbeSet build_probe_set(const World& world, std::span<const SvoStatement> inference2,
                         std::span<const Label> predictions, std::uint64_t seed,
                         std::size_t per_category = 5);

std::string article_for(const std::string& word);

}  // namespace plaus
