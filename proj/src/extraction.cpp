#include "knobtuner/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>
#include <regex>
#include <sstream>

#include "knobtuner/errors.hpp"
#include "knobtuner/text_config.hpp"

namespace knobtuner {

std::string to_string(SourceDocument::Origin origin) {
  switch (origin) {
    case SourceDocument::Origin::Manual: return "manual";
    case SourceDocument::Origin::Forum: return "forum";
    case SourceDocument::Origin::Blog: return "blog";
    case SourceDocument::Origin::ConfigFile: return "config_file";
  }
  return "blog";
}

namespace {

SourceDocument::Origin origin_for(const std::filesystem::path& relative) {
  std::string top = relative.begin() != relative.end()
                        ? relative.begin()->string()
                        : std::string();
  if (top == "manual") return SourceDocument::Origin::Manual;
  if (top == "forum") return SourceDocument::Origin::Forum;
  if (top == "blog") return SourceDocument::Origin::Blog;
  if (top == "config_file") return SourceDocument::Origin::ConfigFile;
  std::string ext = relative.extension().string();
  if (ext == ".cnf" || ext == ".conf" || ext == ".ini" || ext == ".cfg") {
    return SourceDocument::Origin::ConfigFile;
  }
  return SourceDocument::Origin::Blog;
}

std::string trim_copy(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower_copy(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  return s;
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string title_case(const std::string& dbms) {
  if (dbms == "mysql") return "MySQL";
  if (dbms == "postgresql") return "PostgreSQL";
  return dbms;
}

std::string vocabulary_list() {
  std::string out;
  for (const std::string& tag : condition_vocabulary()) {
    if (!out.empty()) out += ", ";
    out += tag;
  }
  return out;
}

}  // namespace

std::vector<SourceDocument> collect_source_texts(
    const std::filesystem::path& root, std::span<const std::string> patterns,
    const std::string& dbms) {
  std::vector<std::regex> regexes;
  for (const std::string& p : patterns) {
    try {
      regexes.emplace_back(p, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid source pattern '" + p + "': " + e.what());
    }
  }

  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(root)) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return a.generic_string() < b.generic_string();
  });

  std::vector<SourceDocument> docs;
  for (const auto& file : files) {
    std::string text;
    try {
      text = read_text_file(file);
    } catch (const IoError& e) {
      std::cerr << "[extract] skipping unreadable file: " << e.what() << "\n";
      continue;
    }
    std::filesystem::path relative = std::filesystem::relative(file, root);

    // span-deduplicated matches across all patterns, ordered by offset
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const std::regex& re : regexes) {
      for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
           it != std::sregex_iterator(); ++it) {
        if (it->length(0) == 0) continue;
        spans.emplace_back(static_cast<std::size_t>(it->position(0)),
                           static_cast<std::size_t>(it->length(0)));
      }
    }
    std::sort(spans.begin(), spans.end());
    spans.erase(std::unique(spans.begin(), spans.end()), spans.end());

    for (const auto& [offset, length] : spans) {
      SourceDocument doc;
      doc.id = relative.generic_string() + ":" + std::to_string(offset);
      doc.origin = origin_for(relative);
      doc.text = trim_copy(text.substr(offset, length));
      doc.dbms = dbms;
      if (!doc.text.empty()) docs.push_back(std::move(doc));
    }
  }
  return docs;
}

std::vector<std::string> load_patterns(const std::filesystem::path& path) {
  std::istringstream is(read_text_file(path));
  std::vector<std::string> patterns;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    patterns.push_back(line);
  }
  if (patterns.empty()) throw ConfigError(path.string() + ": no patterns");
  return patterns;
}

// ---------------------------------------------------------------------------
// Prompt construction

std::string PromptBundle::render() const {
  std::ostringstream os;
  os << role_preamble << "\n\n";
  os << "Source text:\n\"\"\"\n" << source_text << "\n\"\"\"\n\n";
  os << output_format_spec << "\n\n";
  os << "Let's think step by step.\n";
  for (std::size_t i = 0; i < task_steps.size(); ++i) {
    os << "Step " << (i + 1) << ": " << task_steps[i] << "\n";
  }
  return os.str();
}

PromptTemplate PromptTemplate::builtin() {
  PromptTemplate tpl;
  tpl.role =
      "You are an experienced {dbms_title} database administrator. Your task is "
      "to extract knob tuning hints from the source text below.";
  tpl.format =
      "Output format: report each tuning hint on its own line as\n"
      "knob_name | action | conditions\n"
      "where action is exactly one of increase, decrease, or set=<value> "
      "(keep the unit, e.g. set=4GB), and conditions is a comma-separated "
      "list of condition tags (leave it empty when the advice is "
      "unconditional). Output only hint lines, no prose.";
  tpl.steps[0] =
      "Identify every {dbms_title} configuration knob the text gives tuning "
      "advice for. Only report knobs of {dbms_title}, not other systems.";
  tpl.steps[1] =
      "For each knob, extract the recommended value including its unit. If "
      "the text gives no explicit value, infer whether the knob's value "
      "should be increased or decreased.";
  tpl.steps[2] =
      "Extract the circumstances under which the advice applies and map them "
      "to these condition tags: {vocabulary}. Use an empty list when the "
      "advice always applies.";
  return tpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::istringstream is(read_text_file(path));
  std::map<std::string, std::string> sections;
  std::string current;
  std::string line;
  while (std::getline(is, line)) {
    std::string trimmed = trim_copy(line);
    if (trimmed.size() >= 2 && trimmed.front() == '[' && trimmed.back() == ']') {
      current = trimmed.substr(1, trimmed.size() - 2);
      continue;
    }
    if (current.empty()) continue;
    std::string& sec = sections[current];
    if (!sec.empty()) sec += "\n";
    sec += line;
  }
  PromptTemplate tpl;
  for (const char* required : {"role", "format", "step1", "step2", "step3"}) {
    if (!sections.contains(required)) {
      throw ConfigError(path.string() + ": missing [" + required + "] section");
    }
  }
  tpl.role = trim_copy(sections["role"]);
  tpl.format = trim_copy(sections["format"]);
  tpl.steps = {trim_copy(sections["step1"]), trim_copy(sections["step2"]),
               trim_copy(sections["step3"])};
  return tpl;
}

PromptBundle build_prompt(const SourceDocument& doc, const PromptTemplate& tpl) {
  if (doc.dbms != "mysql" && doc.dbms != "postgresql") {
    throw ConfigError("unsupported dbms '" + doc.dbms + "'");
  }
  auto substitute = [&](std::string text) {
    replace_all(text, "{dbms}", doc.dbms);
    replace_all(text, "{dbms_title}", title_case(doc.dbms));
    replace_all(text, "{vocabulary}", vocabulary_list());
    return text;
  };
  PromptBundle bundle;
  bundle.role_preamble = substitute(tpl.role);
  bundle.source_text = doc.text;
  bundle.output_format_spec = substitute(tpl.format);
  for (std::size_t i = 0; i < 3; ++i) bundle.task_steps[i] = substitute(tpl.steps[i]);
  return bundle;
}

std::string repair_prompt(const PromptBundle& bundle, const std::string& deviant) {
  std::ostringstream os;
  os << "The following text was supposed to list tuning hints but does not "
        "match the required format.\n\n"
     << "Text:\n\"\"\"\n"
     << deviant << "\n\"\"\"\n\n"
     << bundle.output_format_spec << "\n\n"
     << "Rewrite the hints from the text in exactly that format.\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Response parsing

SynonymTable SynonymTable::builtin() {
  SynonymTable table;
  table.synonyms = {
      {"write-intensive", "write_heavy"},
      {"write intensive", "write_heavy"},
      {"write-heavy", "write_heavy"},
      {"write heavy", "write_heavy"},
      {"insert-heavy", "write_heavy"},
      {"update-heavy", "write_heavy"},
      {"oltp", "write_heavy"},
      {"read-intensive", "read_heavy"},
      {"read intensive", "read_heavy"},
      {"read-heavy", "read_heavy"},
      {"read heavy", "read_heavy"},
      {"olap", "read_heavy"},
      {"analytical", "read_heavy"},
      {"sort queries", "sort_ops"},
      {"sort operation", "sort_ops"},
      {"sort operations", "sort_ops"},
      {"sorting", "sort_ops"},
      {"full sort", "sort_ops"},
      {"no index", "no_index"},
      {"no indexes", "no_index"},
      {"without indexes", "no_index"},
      {"tables don't have indexes", "no_index"},
      {"missing indexes", "no_index"},
      {"join heavy", "join_heavy"},
      {"many joins", "join_heavy"},
      {"wal", "wal_heavy"},
      {"write-ahead logging", "wal_heavy"},
      {"low buffer ratio", "low_buffer_ratio"},
      {"low buffer hit ratio", "low_buffer_ratio"},
      {"insufficient buffer pool", "low_buffer_ratio"},
      {"dirty data in kernel page", "dirty_pages"},
      {"dirty pages", "dirty_pages"},
      {"caching issues", "cache_issue"},
      {"cache issues", "cache_issue"},
      {"cache issue", "cache_issue"},
      {"memory pressure", "memory_pressure"},
      {"low memory", "memory_pressure"},
      {"memory is sufficient", "memory_headroom"},
      {"sufficient memory", "memory_headroom"},
      {"enough memory", "memory_headroom"},
      {"memory headroom", "memory_headroom"},
      {"high cpu", "cpu_pressure"},
      {"cpu bound", "cpu_pressure"},
      {"disk bound", "disk_pressure"},
      {"io bound", "disk_pressure"},
      {"high disk io", "disk_pressure"},
      {"mixed workload", "mixed"},
  };
  return table;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  SynonymTable table;
  for (auto it = j.at("synonyms").begin(); it != j.at("synonyms").end(); ++it) {
    std::string tag = it.value().get<std::string>();
    if (!is_condition_tag(tag)) {
      throw ConfigError(path.string() + ": synonym '" + it.key() +
                        "' maps to unknown tag '" + tag + "'");
    }
    table.synonyms[lower_copy(it.key())] = tag;
  }
  return table;
}

std::string SynonymTable::resolve(const std::string& phrase) const {
  std::string p = lower_copy(trim_copy(phrase));
  if (p.empty()) return {};
  if (is_condition_tag(p)) return p;
  std::string underscored = p;
  for (char& c : underscored) {
    if (c == '-' || c == ' ' || c == '/') c = '_';
  }
  if (is_condition_tag(underscored)) return underscored;
  if (auto it = synonyms.find(p); it != synonyms.end()) return it->second;
  if (auto it = synonyms.find(underscored); it != synonyms.end()) return it->second;
  return {};
}

namespace {

const std::regex kKnobNameRe("^[A-Za-z_][A-Za-z0-9_.]*$");

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) parts.push_back(item);
  return parts;
}

}  // namespace

ParseOutcome parse_response(const std::string& text, const SynonymTable& synonyms) {
  ParseOutcome outcome;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::string stripped = trim_copy(line);
    if (stripped.empty()) continue;
    // tolerate bullet markers in front of otherwise well-formed lines
    while (!stripped.empty() && (stripped[0] == '-' || stripped[0] == '*')) {
      stripped = trim_copy(stripped.substr(1));
    }
    std::vector<std::string> fields = split_on(stripped, '|');
    if (fields.size() < 2 || fields.size() > 3) continue;

    std::string knob = trim_copy(fields[0]);
    if (!std::regex_match(knob, kKnobNameRe)) continue;

    std::string action_raw = trim_copy(fields[1]);
    std::string action_text = lower_copy(action_raw);
    RecAction action;
    if (action_text == "increase") {
      action = RecAction::increase();
    } else if (action_text == "decrease") {
      action = RecAction::decrease();
    } else if (action_text.rfind("set=", 0) == 0 ||
               action_text.rfind("set ", 0) == 0) {
      auto parts = split_value_unit(trim_copy(action_raw.substr(4)));
      if (!parts) continue;
      action = RecAction::set(parts->value, parts->unit);
    } else {
      continue;
    }

    std::vector<std::string> tags;
    bool contradictory = false;
    if (fields.size() == 3) {
      for (const std::string& phrase : split_on(fields[2], ',')) {
        if (trim_copy(phrase).empty()) continue;
        std::string tag = synonyms.resolve(phrase);
        if (tag.empty()) {
          outcome.dropped_conditions.push_back(trim_copy(phrase));
        } else {
          tags.push_back(tag);
        }
      }
    }
    TuningHint hint;
    hint.knob = knob;
    hint.action = action;
    try {
      hint.conditions = ConditionVector(std::move(tags));
    } catch (const ConfigError&) {
      contradictory = true;  // e.g. read_heavy and write_heavy on one line
    }
    if (contradictory) continue;
    outcome.hints.push_back(std::move(hint));
  }

  if (outcome.hints.empty()) {
    outcome.malformed = true;
    outcome.reason = "no hint lines matched 'knob | action | conditions'";
    outcome.remainder = text;
  }
  return outcome;
}

nlohmann::ordered_json ExtractionReport::to_json() const {
  nlohmann::ordered_json j;
  j["documents"] = documents;
  j["parsed_documents"] = parsed_documents;
  j["repair_attempts"] = repair_attempts;
  j["dropped_conditions"] = dropped_conditions;
  j["non_actionable_hints"] = non_actionable_hints;
  j["skipped_documents"] = skipped_documents;
  j["unparsed_documents"] = unparsed_documents;
  return j;
}

std::vector<TuningHint> extract_hints(std::span<const SourceDocument> docs,
                                      LlmClient& client,
                                      const ExtractionOptions& options,
                                      ExtractionReport* report) {
  std::vector<TuningHint> hints;
  ExtractionReport local;
  ExtractionReport& rep = report ? *report : local;

  for (const SourceDocument& doc : docs) {
    ++rep.documents;
    PromptBundle bundle = build_prompt(doc, options.prompt);
    ParseOutcome outcome;
    try {
      std::string response = client.complete(bundle.render());
      outcome = parse_response(response, options.synonyms);
      int repairs = 0;
      while (outcome.malformed && repairs < options.max_repair_retries) {
        ++repairs;
        ++rep.repair_attempts;
        response = client.complete(repair_prompt(bundle, outcome.remainder));
        outcome = parse_response(response, options.synonyms);
      }
    } catch (const EvalError& e) {
      rep.skipped_documents.push_back(doc.id);
      std::cerr << "[extract] skipping " << doc.id << ": " << e.what() << "\n";
      continue;
    }
    rep.dropped_conditions += static_cast<int>(outcome.dropped_conditions.size());
    if (outcome.malformed) {
      rep.unparsed_documents.push_back(doc.id);
      continue;
    }
    ++rep.parsed_documents;
    for (TuningHint& hint : outcome.hints) {
      hint.id = static_cast<std::uint64_t>(hints.size());
      std::string snippet = doc.text.substr(0, 80);
      hint.source = doc.id + ": " + snippet;
      if (options.catalog && !options.catalog->find(hint.knob)) {
        ++rep.non_actionable_hints;
      }
      hints.push_back(std::move(hint));
    }
  }
  return hints;
}

std::vector<std::pair<std::string, int>> rank_knobs(
    std::span<const TuningHint> hints, std::size_t top_n) {
  std::map<std::string, int> counts;
  for (const TuningHint& hint : hints) ++counts[hint.knob];
  std::vector<std::pair<std::string, int>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (top_n > 0 && out.size() > top_n) out.resize(top_n);
  return out;
}

}  // namespace knobtuner
