#include "plaus/corpus/records.hpp"

#include <algorithm>

#include "internal/jsonl.hpp"

namespace plaus {

using detail::json;
using detail::Record;

namespace {

json span_json(const Span& s) { return json::array({s.begin, s.end}); }

Span span_from(const Record& r, const char* name) {
  const auto& j = r.field(name);
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() || !j[1].is_number_unsigned())
    r.fail(std::string("field '") + name + "' must be [begin, end]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

json statement_json(const SvoStatement& s) {
  json j;
  j["id"] = s.id;
  j["text"] = s.text;
  j["tokens"] = s.tokens;
  j["subject_span"] = span_json(s.subject);
  j["verb_span"] = span_json(s.verb);
  j["object_span"] = span_json(s.object);
  if (s.label) j["label"] = std::string(to_string(*s.label));
  return j;
}

SvoStatement statement_from(const Record& r, bool label_required) {
  SvoStatement s;
  s.id = r.get<std::string>("id");
  s.text = r.get<std::string>("text");
  s.tokens = r.get<std::vector<int>>("tokens");
  s.subject = span_from(r, "subject_span");
  s.verb = span_from(r, "verb_span");
  s.object = span_from(r, "object_span");
  if (label_required || r.has("label")) {
    const auto text = r.get<std::string>("label");
    s.label = parse_label(text);
    if (!s.label) r.fail("field 'label' must be True or False, got '" + text + "'");
  }
  try {
    s.validate();
  } catch (const ContractError& e) {
    r.fail(e.what());
  }
  return s;
}

template <class F>
auto wrap(const Record& r, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
}

}  // namespace

void save_splits(const std::filesystem::path& path, const SplitSet& splits) {
  detail::JsonlWriter w(path);
  for (Split sp : {Split::training, Split::inference1, Split::inference2})
    for (const auto& s : splits.get(sp)) {
      if (!s.label) throw ContractError("dataset statement " + s.id + " has no label");
      json j = statement_json(s);
      j["split"] = std::string(to_string(sp));
      w.write(j);
    }
  w.close();
}

SplitSet load_splits(const std::filesystem::path& path) {
  SplitSet out;
  for (const auto& r : detail::read_jsonl(path)) {
    const Split sp = wrap(r, [&] { return parse_split(r.get<std::string>("split")); });
    out.get(sp).push_back(statement_from(r, true));
  }
  return out;
}

void save_probes(const std::filesystem::path& path, const std::vector<ProbeItem>& probes) {
  detail::JsonlWriter w(path);
  for (const auto& p : probes) {
    json j = statement_json(p.statement);
    j["category"] = std::string(to_string(p.category));
    j["source_id"] = p.source_id;
    j["rule"] = std::string(to_string(p.rule));
    w.write(j);
  }
  w.close();
}

std::vector<ProbeItem> load_probes(const std::filesystem::path& path) {
  std::vector<ProbeItem> out;
  for (const auto& r : detail::read_jsonl(path)) {
    ProbeItem p;
    p.category = wrap(r, [&] { return parse_probe_category(r.get<std::string>("category")); });
    p.source_id = r.get<std::string>("source_id");
    p.rule = wrap(r, [&] { return parse_probe_rule(r.get<std::string>("rule")); });
    p.statement = statement_from(r, !is_unaffected(p.category));
    out.push_back(std::move(p));
  }
  return out;
}

CorpusStatistics compute_statistics(const SplitSet& splits, const std::vector<ProbeItem>& probes) {
  CorpusStatistics st;
  for (Split sp : {Split::training, Split::inference1, Split::inference2}) {
    const std::string name(to_string(sp));
    st.split_counts[name] = splits.get(sp).size();
    std::size_t t = 0;
    for (const auto& s : splits.get(sp)) t += s.label == Label::True;
    st.true_counts[name] = t;
  }
  for (auto c : kProbeCategories) st.probe_counts[std::string(to_string(c))] = 0;
  std::vector<std::string> sources;
  for (const auto& p : probes) {
    ++st.probe_counts[std::string(to_string(p.category))];
    sources.push_back(p.source_id);
  }
  std::sort(sources.begin(), sources.end());
  st.probe_sources = static_cast<std::size_t>(std::unique(sources.begin(), sources.end()) - sources.begin());
  return st;
}

void save_statistics(const std::filesystem::path& path, const CorpusStatistics& st) {
  detail::JsonlWriter w(path);
  for (const auto& [split, n] : st.split_counts)
    w.write({{"record", "split"}, {"name", split}, {"count", n}, {"true", st.true_counts.at(split)}});
  for (const auto& [cat, n] : st.probe_counts) w.write({{"record", "probe_category"}, {"name", cat}, {"count", n}});
  w.write({{"record", "probe_sources"}, {"count", st.probe_sources}});
  w.close();
}

CorpusStatistics load_statistics(const std::filesystem::path& path) {
  CorpusStatistics st;
  for (const auto& r : detail::read_jsonl(path)) {
    const auto kind = r.get<std::string>("record");
    if (kind == "split") {
      const auto name = r.get<std::string>("name");
      st.split_counts[name] = r.get<std::size_t>("count");
      st.true_counts[name] = r.get<std::size_t>("true");
    } else if (kind == "probe_category") {
      st.probe_counts[r.get<std::string>("name")] = r.get<std::size_t>("count");
    } else if (kind == "probe_sources") {
      st.probe_sources = r.get<std::size_t>("count");
    } else {
      r.fail("unknown statistics record '" + kind + "'");
    }
  }
  return st;
}

}  // namespace plaus
