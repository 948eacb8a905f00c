#include "plaus/corpus/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include "plaus/errors.hpp"
#include "plaus/rng.hpp"

namespace plaus {

namespace {

enum Cat { person, animal, bird, plant, liquid, food, mineral, fabric, tool, vehicle };

struct CategorySeed {
  const char* name;
  const char* noun;
  std::vector<std::vector<const char*>> entities;  // synonym groups
};

const std::vector<CategorySeed>& category_seeds() {
  static const std::vector<CategorySeed> seeds = {
      {"person", "person", {{"man", "guy"}, {"woman", "lady"}, {"child", "kid"}, {"farmer", "grower"}, {"chef", "cook"}}},
      {"animal", "animal", {{"dog", "hound", "puppy"}, {"cat", "kitten"}, {"horse", "stallion", "pony"}, {"cow", "heifer"}, {"pig", "hog", "swine"}}},
      {"bird", "bird", {{"eagle", "hawk"}, {"sparrow", "finch"}, {"parrot", "macaw"}, {"owl", "owlet"}, {"duck", "mallard"}}},
      {"plant", "plant", {{"tree", "oak"}, {"flower", "blossom"}, {"grass", "turf"}, {"bush", "shrub"}, {"vine", "creeper"}}},
      {"liquid", "liquid", {{"water", "aqua"}, {"milk", "cream"}, {"juice", "nectar"}, {"oil", "grease"}, {"wine", "ale"}}},
      {"food", "food", {{"bread", "loaf"}, {"apple", "pippin"}, {"cheese", "curd"}, {"meat", "steak"}, {"rice", "grain"}}},
      {"mineral", "mineral", {{"rock", "stone"}, {"pebble", "gravel"}, {"brick", "block"}, {"boulder", "crag"}, {"iron", "metal"}}},
      {"fabric", "fabric", {{"towel", "cloth"}, {"shirt", "tunic"}, {"blanket", "quilt"}, {"rag", "tatter"}, {"scarf", "shawl"}}},
      {"tool", "tool", {{"knife", "blade"}, {"hammer", "mallet"}, {"saw", "cutter"}, {"axe", "hatchet"}, {"scissors", "shears"}}},
      {"vehicle", "vehicle", {{"truck", "lorry"}, {"car", "auto"}, {"boat", "ship"}, {"cart", "wagon"}, {"tractor", "bulldozer"}}},
  };
  return seeds;
}

struct VerbSeed {
  const char* name;
  std::vector<std::pair<const char*, const char*>> forms;  // inflected, base
  std::vector<int> agents, patients;
};

const std::vector<VerbSeed>& verb_seeds() {
  static const std::vector<VerbSeed> seeds = {
      {"drink", {{"drinks", "drink"}, {"sips", "sip"}, {"gulps", "gulp"}}, {person, animal, bird, plant}, {liquid}},
      {"eat", {{"eats", "eat"}, {"devours", "devour"}, {"consumes", "consume"}}, {person, animal, bird}, {food, plant}},
      {"cut", {{"cuts", "cut"}, {"slices", "slice"}, {"chops", "chop"}}, {person, tool}, {food, plant, fabric}},
      {"carry", {{"carries", "carry"}, {"hauls", "haul"}, {"transports", "transport"}}, {person, animal, vehicle}, {food, mineral, fabric, tool}},
      {"absorb", {{"absorbs", "absorb"}, {"soaks up", "soak up"}}, {fabric, plant}, {liquid}},
      {"lift", {{"lifts", "lift"}, {"raises", "raise"}, {"picks up", "pick up"}}, {person, vehicle}, {food, mineral, fabric, tool, animal, bird}},
      {"chase", {{"chases", "chase"}, {"pursues", "pursue"}}, {person, animal, bird}, {person, animal, bird, vehicle}},
      {"throw", {{"throws", "throw"}, {"tosses", "toss"}, {"hurls", "hurl"}}, {person}, {food, mineral, fabric, tool}},
      {"wear", {{"wears", "wear"}, {"dons", "don"}, {"puts on", "put on"}}, {person}, {fabric}},
      {"crush", {{"crushes", "crush"}, {"squashes", "squash"}}, {vehicle, mineral, person, animal}, {food, plant, fabric, bird}},
      {"pour", {{"pours", "pour"}, {"spills", "spill"}}, {person}, {liquid}},
      {"break", {{"breaks", "break"}, {"smashes", "smash"}, {"cracks", "crack"}}, {person, tool, mineral, vehicle}, {mineral, food, tool}},
      {"feed", {{"feeds", "feed"}, {"nourishes", "nourish"}}, {person}, {person, animal, bird, plant}},
      {"repair", {{"repairs", "repair"}, {"fixes", "fix"}, {"mends", "mend"}}, {person}, {tool, vehicle, fabric}},
      {"bite", {{"bites", "bite"}, {"nips", "nip"}}, {animal, person}, {food, person, animal, plant}},
      {"ride", {{"rides", "ride"}, {"mounts", "mount"}}, {person}, {animal, vehicle}},
      {"wash", {{"washes", "wash"}, {"rinses", "rinse"}, {"cleans", "clean"}}, {person, liquid}, {person, animal, fabric, tool, vehicle, food}},
  };
  return seeds;
}

const std::vector<std::string> kAdjectives = {"big", "small", "old", "new", "red", "dark"};

std::string join(const std::vector<std::string>& w) {
  std::string out;
  for (const auto& s : w) {
    if (!out.empty()) out.push_back(' ');
    out += s;
  }
  return out;
}

}  // namespace

void WorldConfig::validate() const {
  if (n_statements == 0) throw ConfigError("n_statements must be positive");
  if (n_categories < 2 || n_categories > 10) throw ConfigError("n_categories must be in [2, 10]");
  if (entities_per_category < 1 || entities_per_category > 5)
    throw ConfigError("entities_per_category must be in [1, 5]");
  if (n_verbs < 1 || n_verbs > 17) throw ConfigError("n_verbs must be in [1, 17]");
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(exception_rate) || !unit(adjective_rate) || !unit(synonym_rate))
    throw ConfigError("rates must lie in [0, 1]");
  if (!(inference2_fraction > 0.0 && inference2_fraction < 1.0) ||
      !(inference1_fraction > 0.0 && inference1_fraction < 1.0))
    throw ConfigError("split fractions must lie in (0, 1)");
}

std::string article_for(const std::string& word) {
  return !word.empty() && std::string_view("aeiou").find(word[0]) != std::string_view::npos ? "an" : "a";
}

World::World(const WorldConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(cfg.seed, "world.lexicon"));

  const auto& cseeds = category_seeds();
  for (int c = 0; c < cfg.n_categories; ++c) {
    const auto& cs = cseeds[static_cast<std::size_t>(c)];
    categories_.push_back({cs.name, cs.noun});
    for (int e = 0; e < cfg.entities_per_category; ++e) {
      Entity ent;
      const auto& group = cs.entities[static_cast<std::size_t>(e)];
      ent.name = group[0];
      ent.category = c;
      for (const char* f : group) ent.forms.emplace_back(f);
      entities_.push_back(std::move(ent));
    }
  }
  const auto& vseeds = verb_seeds();
  const auto n_verbs = static_cast<std::size_t>(cfg.n_verbs);
  cat_act_.assign(categories_.size(), std::vector<bool>(n_verbs, false));
  cat_undergo_ = cat_act_;
  for (std::size_t v = 0; v < n_verbs; ++v) {
    Verb verb;
    verb.name = vseeds[v].name;
    for (auto [infl, base] : vseeds[v].forms) verb.forms.push_back({split_words(infl), split_words(base)});
    verbs_.push_back(std::move(verb));
    for (int c : vseeds[v].agents)
      if (c < cfg.n_categories) cat_act_[static_cast<std::size_t>(c)][v] = true;
    for (int c : vseeds[v].patients)
      if (c < cfg.n_categories) cat_undergo_[static_cast<std::size_t>(c)][v] = true;
  }
  adjectives_ = kAdjectives;

  act_.resize(entities_.size());
  undergo_.resize(entities_.size());
  for (std::size_t e = 0; e < entities_.size(); ++e) {
    const auto c = static_cast<std::size_t>(entities_[e].category);
    act_[e] = cat_act_[c];
    undergo_[e] = cat_undergo_[c];
    for (std::size_t v = 0; v < verbs_.size(); ++v) {
      if (rng.bernoulli(cfg.exception_rate)) act_[e][v] = !act_[e][v];
      if (rng.bernoulli(cfg.exception_rate)) undergo_[e][v] = !undergo_[e][v];
    }
  }

  std::vector<std::string> words = {"the", "a", "an", "is", "can", "cannot"};
  for (const auto& c : categories_) words.push_back(c.noun);
  for (const auto& e : entities_) words.insert(words.end(), e.forms.begin(), e.forms.end());
  for (const auto& v : verbs_)
    for (const auto& f : v.forms) {
      words.insert(words.end(), f.inflected.begin(), f.inflected.end());
      words.insert(words.end(), f.base.begin(), f.base.end());
    }
  words.insert(words.end(), adjectives_.begin(), adjectives_.end());
  vocab_ = Vocabulary(std::move(words));
}

bool World::category_can_act(int c, int v) const { return cat_act_.at(static_cast<std::size_t>(c)).at(static_cast<std::size_t>(v)); }
bool World::category_can_undergo(int c, int v) const {
  return cat_undergo_.at(static_cast<std::size_t>(c)).at(static_cast<std::size_t>(v));
}
bool World::can_act(int e, int v) const { return act_.at(static_cast<std::size_t>(e)).at(static_cast<std::size_t>(v)); }
bool World::can_undergo(int e, int v) const { return undergo_.at(static_cast<std::size_t>(e)).at(static_cast<std::size_t>(v)); }
bool World::plausible(int s, int v, int o) const { return can_act(s, v) && can_undergo(o, v); }

std::vector<CapabilityRule> World::rules() const {
  std::vector<CapabilityRule> out;
  for (std::size_t e = 0; e < entities_.size(); ++e)
    for (std::size_t v = 0; v < verbs_.size(); ++v) {
      out.push_back({static_cast<int>(e), static_cast<int>(v), Role::subject, act_[e][v]});
      out.push_back({static_cast<int>(e), static_cast<int>(v), Role::object, undergo_[e][v]});
    }
  return out;
}

Label World::gold(const Rendering& r) const {
  return plausible(r.subject, r.verb, r.object) ? Label::True : Label::False;
}

std::vector<std::string> World::noun_phrase(int entity, int form, int adj) const {
  std::vector<std::string> out;
  if (adj >= 0) out.push_back(adjectives_.at(static_cast<std::size_t>(adj)));
  out.push_back(entities_.at(static_cast<std::size_t>(entity)).forms.at(static_cast<std::size_t>(form)));
  return out;
}

std::vector<std::string> World::subject_words(const Rendering& r) const {
  return noun_phrase(r.subject, r.subject_form, r.subject_adj);
}

std::vector<std::string> World::object_words(const Rendering& r) const {
  return noun_phrase(r.object, r.object_form, r.object_adj);
}

SvoStatement World::assemble(std::string id, const std::vector<std::string>& before,
                             const std::vector<std::string>& subject, const std::vector<std::string>& verb,
                             const std::vector<std::string>& mid, const std::vector<std::string>& object,
                             std::optional<Label> label) const {
  std::vector<std::string> words = before;
  SvoStatement s;
  s.id = std::move(id);
  s.subject.begin = words.size();
  words.insert(words.end(), subject.begin(), subject.end());
  s.subject.end = words.size();
  s.verb.begin = words.size();
  words.insert(words.end(), verb.begin(), verb.end());
  s.verb.end = words.size();
  words.insert(words.end(), mid.begin(), mid.end());
  s.object.begin = words.size();
  words.insert(words.end(), object.begin(), object.end());
  s.object.end = words.size();
  s.text = join(words);
  s.tokens = vocab_.tokenize(s.text);
  s.label = label;
  s.validate();
  return s;
}

SvoStatement World::render(const Rendering& r, std::string id) const {
  auto subj = subject_words(r);
  auto obj = object_words(r);
  const std::string det_s = r.subject_definite ? "the" : article_for(subj.front());
  const std::string det_o = r.object_definite ? "the" : article_for(obj.front());
  const auto& verb = verbs_.at(static_cast<std::size_t>(r.verb)).forms.at(static_cast<std::size_t>(r.verb_form)).inflected;
  return assemble(std::move(id), {det_s}, subj, verb, {det_o}, obj, gold(r));
}

std::optional<Rendering> World::analyze(const SvoStatement& s) const {
  auto words = split_words(s.text);
  auto slice = [&](const Span& sp) {
    if (sp.end > words.size() || sp.empty()) return std::vector<std::string>{};
    return std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(sp.begin),
                                    words.begin() + static_cast<std::ptrdiff_t>(sp.end));
  };
  auto noun = [&](const std::vector<std::string>& w, int& entity, int& form, int& adj) {
    if (w.empty() || w.size() > 2) return false;
    adj = -1;
    if (w.size() == 2) {
      auto it = std::find(adjectives_.begin(), adjectives_.end(), w[0]);
      if (it == adjectives_.end()) return false;
      adj = static_cast<int>(it - adjectives_.begin());
    }
    for (std::size_t e = 0; e < entities_.size(); ++e) {
      const auto& f = entities_[e].forms;
      auto it = std::find(f.begin(), f.end(), w.back());
      if (it != f.end()) {
        entity = static_cast<int>(e);
        form = static_cast<int>(it - f.begin());
        return true;
      }
    }
    return false;
  };
  if (s.subject.begin != 1 || s.object.begin != s.verb.end + 1 || s.object.end != words.size()) return std::nullopt;
  auto is_det = [](const std::string& w) { return w == "the" || w == "a" || w == "an"; };
  if (!is_det(words[0]) || !is_det(words[s.verb.end])) return std::nullopt;
  Rendering r;
  r.subject_definite = words[0] == "the";
  r.object_definite = words[s.verb.end] == "the";
  if (!noun(slice(s.subject), r.subject, r.subject_form, r.subject_adj)) return std::nullopt;
  if (!noun(slice(s.object), r.object, r.object_form, r.object_adj)) return std::nullopt;
  const auto verb = slice(s.verb);
  for (std::size_t v = 0; v < verbs_.size(); ++v)
    for (std::size_t f = 0; f < verbs_[v].forms.size(); ++f)
      if (verbs_[v].forms[f].inflected == verb) {
        r.verb = static_cast<int>(v);
        r.verb_form = static_cast<int>(f);
        return r;
      }
  return std::nullopt;
}

GeneratedWorld generate_world(const WorldConfig& cfg) {
  World world(cfg);
  Rng rng(derive_seed(cfg.seed, "world.sample"));

  std::vector<std::array<int, 3>> pos, neg;
  const int E = static_cast<int>(world.entities().size());
  const int V = static_cast<int>(world.verbs().size());
  for (int s = 0; s < E; ++s)
    for (int v = 0; v < V; ++v)
      for (int o = 0; o < E; ++o) {
        if (s == o) continue;
        (world.plausible(s, v, o) ? pos : neg).push_back({s, v, o});
      }
  const std::size_t n_true = cfg.n_statements / 2;
  const std::size_t n_false = cfg.n_statements - n_true;
  if (pos.size() < n_true || neg.size() < n_false) {
    throw GenerationError("world budget too small: " + std::to_string(pos.size()) + " plausible and " +
                          std::to_string(neg.size()) + " implausible triples for " +
                          std::to_string(cfg.n_statements) + " balanced statements");
  }
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<std::array<int, 3>> chosen(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_true));
  chosen.insert(chosen.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_false));
  rng.shuffle(chosen);

  std::vector<SvoStatement> all;
  all.reserve(chosen.size());
  const std::size_t n_adj = world.adjectives().size();
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto [s, v, o] = chosen[i];
    Rendering r;
    r.subject = s;
    r.verb = v;
    r.object = o;
    auto pick_form = [&](std::size_t n_forms) {
      if (n_forms < 2 || !rng.bernoulli(cfg.synonym_rate)) return 0;
      return 1 + static_cast<int>(rng.index(n_forms - 1));
    };
    r.subject_form = pick_form(world.entities()[static_cast<std::size_t>(s)].forms.size());
    r.object_form = pick_form(world.entities()[static_cast<std::size_t>(o)].forms.size());
    r.verb_form = pick_form(world.verbs()[static_cast<std::size_t>(v)].forms.size());
    r.subject_adj = rng.bernoulli(cfg.adjective_rate) ? static_cast<int>(rng.index(n_adj)) : -1;
    r.object_adj = rng.bernoulli(cfg.adjective_rate) ? static_cast<int>(rng.index(n_adj)) : -1;
    r.subject_definite = rng.bernoulli(0.5);
    r.object_definite = rng.bernoulli(0.5);
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    all.push_back(world.render(r, id));
  }

  const auto n = all.size();
  const auto n2 = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.inference2_fraction));
  const auto pool = n - n2;
  const auto n1 = static_cast<std::size_t>(std::llround(static_cast<double>(pool) * cfg.inference1_fraction));
  if (n2 == 0 || n1 == 0 || pool == n1) throw GenerationError("too few statements to populate every split");
  SplitSet splits;
  auto it = all.begin();
  splits.inference2.assign(it, it + static_cast<std::ptrdiff_t>(n2));
  it += static_cast<std::ptrdiff_t>(n2);
  splits.inference1.assign(it, it + static_cast<std::ptrdiff_t>(n1));
  it += static_cast<std::ptrdiff_t>(n1);
  splits.training.assign(it, all.end());
  return {std::move(world), std::move(splits)};
}

namespace {

struct Variant {
  int entity, form, adj;
};

// Surface variants of the same entity, excluding the given rendering. Synonym
// swaps come first, then adjective changes.
std::vector<Variant> same_entity_variants(const World& w, int entity, int form, int adj, Rng& rng) {
  std::vector<Variant> synonyms, modifiers;
  const int n_forms = static_cast<int>(w.entities()[static_cast<std::size_t>(entity)].forms.size());
  const int n_adj = static_cast<int>(w.adjectives().size());
  for (int f = 0; f < n_forms; ++f)
    for (int a = -1; a < n_adj; ++a) {
      if (f == form && a == adj) continue;
      (f != form ? synonyms : modifiers).push_back({entity, f, a});
    }
  rng.shuffle(synonyms);
  rng.shuffle(modifiers);
  // Keep one plain synonym up front when available.
  std::stable_partition(synonyms.begin(), synonyms.end(), [&](const Variant& v) { return v.adj == adj; });
  synonyms.insert(synonyms.end(), modifiers.begin(), modifiers.end());
  return synonyms;
}

}  // namespace

ProbeSet build_probe_set(const World& world, std::span<const SvoStatement> inference2,
                         std::span<const Label> predictions, std::uint64_t seed, std::size_t per_category) {
  if (inference2.size() != predictions.size()) {
    throw ContractError("predictions must cover inference2 (" + std::to_string(predictions.size()) + " vs " +
                        std::to_string(inference2.size()) + ")");
  }
  ProbeSet out;
  Rng rng(derive_seed(seed, "probes"));
  const auto& ents = world.entities();

  for (std::size_t i = 0; i < inference2.size(); ++i) {
    const SvoStatement& src = inference2[i];
    if (!src.label) throw ContractError("inference2 statement " + src.id + " has no label");
    if (predictions[i] == *src.label) continue;
    auto parsed = world.analyze(src);
    if (!parsed) throw ContractError("statement " + src.id + " is not a rendering of this world");
    const Rendering r = *parsed;
    const Label gold = *src.label;
    ++out.n_sources;

    std::size_t serial = 0;
    auto emit = [&](ProbeCategory cat, SvoStatement st) {
      st.id = "p-" + src.id + "-" + std::to_string(serial++);
      out.items.push_back({cat, src.id, std::move(st), rule_for(cat)});
    };
    auto det = [&](bool definite, const std::vector<std::string>& np) {
      return std::vector<std::string>{definite ? "the" : article_for(np.front())};
    };
    const auto& verb_forms = world.verbs()[static_cast<std::size_t>(r.verb)].forms;

    // Same-entity substitutions keep the gold label.
    auto subj_vars = same_entity_variants(world, r.subject, r.subject_form, r.subject_adj, rng);
    for (std::size_t k = 0; k < std::min(per_category, subj_vars.size()); ++k) {
      Rendering x = r;
      x.subject_form = subj_vars[k].form;
      x.subject_adj = subj_vars[k].adj;
      emit(ProbeCategory::affected_subject, world.render(x, ""));
    }
    std::vector<int> other_verb_forms;
    for (int f = 0; f < static_cast<int>(verb_forms.size()); ++f)
      if (f != r.verb_form) other_verb_forms.push_back(f);
    rng.shuffle(other_verb_forms);
    for (std::size_t k = 0; k < std::min(per_category, other_verb_forms.size()); ++k) {
      Rendering x = r;
      x.verb_form = other_verb_forms[k];
      emit(ProbeCategory::affected_verb, world.render(x, ""));
    }
    auto obj_vars = same_entity_variants(world, r.object, r.object_form, r.object_adj, rng);
    for (std::size_t k = 0; k < std::min(per_category, obj_vars.size()); ++k) {
      Rendering x = r;
      x.object_form = obj_vars[k].form;
      x.object_adj = obj_vars[k].adj;
      emit(ProbeCategory::affected_object, world.render(x, ""));
    }
    // Paraphrases change all three spans at once.
    if (!subj_vars.empty() && !obj_vars.empty() && !other_verb_forms.empty()) {
      std::set<std::tuple<std::size_t, std::size_t, std::size_t>> used;
      const std::size_t limit = std::min<std::size_t>(per_category, subj_vars.size() * obj_vars.size() * other_verb_forms.size());
      for (std::size_t k = 0; used.size() < limit && k < 100 * per_category; ++k) {
        const std::size_t a = k < per_category ? k % subj_vars.size() : rng.index(subj_vars.size());
        const std::size_t b = k < per_category ? k % other_verb_forms.size() : rng.index(other_verb_forms.size());
        const std::size_t c = k < per_category ? k % obj_vars.size() : rng.index(obj_vars.size());
        if (!used.insert({a, b, c}).second) continue;
        Rendering x = r;
        x.subject_form = subj_vars[a].form;
        x.subject_adj = subj_vars[a].adj;
        x.verb_form = other_verb_forms[b];
        x.object_form = obj_vars[c].form;
        x.object_adj = obj_vars[c].adj;
        emit(ProbeCategory::affected_paraphrase, world.render(x, ""));
      }
    }

    // Cross-category substitutions give independent statements.
    auto cross = [&](int keep_cat, int exclude) {
      std::vector<int> pool;
      for (int e = 0; e < static_cast<int>(ents.size()); ++e)
        if (ents[static_cast<std::size_t>(e)].category != keep_cat && e != exclude) pool.push_back(e);
      rng.shuffle(pool);
      if (pool.size() > per_category) pool.resize(per_category);
      return pool;
    };
    const int s_cat = ents[static_cast<std::size_t>(r.subject)].category;
    const int o_cat = ents[static_cast<std::size_t>(r.object)].category;
    for (int e : cross(s_cat, r.object)) {
      Rendering x = r;
      x.subject = e;
      x.subject_form = 0;
      emit(ProbeCategory::unaffected_subject, world.render(x, ""));
    }
    for (int e : cross(o_cat, r.subject)) {
      Rendering x = r;
      x.object = e;
      x.object_form = 0;
      emit(ProbeCategory::unaffected_object, world.render(x, ""));
    }

    // Two-step chain through the category of whichever side carries the
    // category-default rule that decides the label.
    const auto& vf = verb_forms[static_cast<std::size_t>(r.verb_form)];
    auto modal = [&](bool can) {
      std::vector<std::string> w{can ? "can" : "cannot"};
      w.insert(w.end(), vf.base.begin(), vf.base.end());
      return w;
    };
    const bool subj_default = world.can_act(r.subject, r.verb) == world.category_can_act(s_cat, r.verb);
    const bool obj_default = world.can_undergo(r.object, r.verb) == world.category_can_undergo(o_cat, r.verb);
    const std::string s_noun = world.categories()[static_cast<std::size_t>(s_cat)].noun;
    const std::string o_noun = world.categories()[static_cast<std::size_t>(o_cat)].noun;
    auto subj_np = world.subject_words(r);
    auto obj_np = world.object_words(r);

    bool subject_side = false, object_side = false;
    if (gold == Label::True) {
      subject_side = subj_default && world.category_can_act(s_cat, r.verb);
      object_side = !subject_side && obj_default && world.category_can_undergo(o_cat, r.verb);
    } else {
      subject_side = subj_default && !world.category_can_act(s_cat, r.verb);
      object_side = !subject_side && obj_default && !world.category_can_undergo(o_cat, r.verb);
    }
    if (subject_side) {
      // R1: "the dog is an animal"; R2: "an animal can drink the water"
      emit(ProbeCategory::affected_reasoning,
           world.assemble("", det(r.subject_definite, subj_np), subj_np, {"is"}, {article_for(s_noun)}, {s_noun},
                          Label::True));
      emit(ProbeCategory::affected_reasoning,
           world.assemble("", {article_for(s_noun)}, {s_noun}, modal(gold == Label::True),
                          det(r.object_definite, obj_np), obj_np, Label::True));
    } else if (object_side) {
      // R1: "the water is a liquid"; R2: "the dog can drink a liquid"
      emit(ProbeCategory::affected_reasoning,
           world.assemble("", det(r.object_definite, obj_np), obj_np, {"is"}, {article_for(o_noun)}, {o_noun},
                          Label::True));
      emit(ProbeCategory::affected_reasoning,
           world.assemble("", det(r.subject_definite, subj_np), subj_np, modal(gold == Label::True),
                          {article_for(o_noun)}, {o_noun}, Label::True));
    }
  }
  return out;
}

}  // namespace plaus
