#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtuner/hint_model.hpp"
#include "knobtuner/knob_catalog.hpp"
#include "knobtuner/llm_client.hpp"

namespace knobtuner {

struct SourceDocument {
  enum class Origin { Manual, Forum, Blog, ConfigFile };

  std::string id;  // relative path : match offset
  Origin origin = Origin::Blog;
  std::string text;
  std::string dbms;
};

std::string to_string(SourceDocument::Origin origin);

// Walks `root` in path-lexicographic order and returns one document per
// regex match, ordered by match offset within each file and de-duplicated
// by span. The origin comes from the top-level subdirectory name when it is
// one of manual/forum/blog/config_file, else from the file extension.
std::vector<SourceDocument> collect_source_texts(
    const std::filesystem::path& root, std::span<const std::string> patterns,
    const std::string& dbms);

std::vector<std::string> load_patterns(const std::filesystem::path& path);

// The four prompt elements; render() concatenates them with the chain of
// thought marker ahead of the three task steps.
struct PromptBundle {
  std::string role_preamble;
  std::string source_text;
  std::string output_format_spec;
  std::array<std::string, 3> task_steps;  // knob -> value/direction -> conditions

  std::string render() const;
};

// Prompt template data file: [role] / [format] / [step1..3] sections with
// {dbms}, {dbms_title} and {vocabulary} placeholders.
struct PromptTemplate {
  std::string role;
  std::string format;
  std::array<std::string, 3> steps;

  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate builtin();
};

PromptBundle build_prompt(const SourceDocument& doc, const PromptTemplate& tpl);

// Condition phrase -> vocabulary tag mapping used when parsing responses;
// data file {"format": 1, "synonyms": {...}}.
struct SynonymTable {
  std::map<std::string, std::string> synonyms;

  static SynonymTable load(const std::filesystem::path& path);
  static SynonymTable builtin();

  // Resolves a raw phrase to a tag, or empty when unknown.
  std::string resolve(const std::string& phrase) const;
};

struct ParseOutcome {
  std::vector<TuningHint> hints;
  bool malformed = false;
  std::string reason;
  std::string remainder;  // the deviant text, fed to the repair pass
  std::vector<std::string> dropped_conditions;
};

// Parses the prescribed `knob | action | conditions` line format. Unknown
// condition phrases map through the synonym table or are dropped with a
// note; malformed (zero records) carries the raw text for repair.
ParseOutcome parse_response(const std::string& text, const SynonymTable& synonyms);

struct ExtractionReport {
  int documents = 0;
  int parsed_documents = 0;
  int repair_attempts = 0;
  int dropped_conditions = 0;
  int non_actionable_hints = 0;  // knob missing from the catalog
  std::vector<std::string> skipped_documents;    // endpoint failures
  std::vector<std::string> unparsed_documents;   // malformed after repairs

  nlohmann::ordered_json to_json() const;
};

struct ExtractionOptions {
  PromptTemplate prompt = PromptTemplate::builtin();
  SynonymTable synonyms = SynonymTable::builtin();
  int max_repair_retries = 2;
  const Catalog* catalog = nullptr;  // optional actionability check
};

// build_prompt -> complete -> parse per document; repairs deviant responses
// up to max_repair_retries; document order is preserved in the output.
std::vector<TuningHint> extract_hints(std::span<const SourceDocument> docs,
                                      LlmClient& client,
                                      const ExtractionOptions& options,
                                      ExtractionReport* report = nullptr);

// The repair prompt: the deviant text plus the format specification.
std::string repair_prompt(const PromptBundle& bundle, const std::string& deviant);

// Knobs by mention count, descending; ties lexicographic; top_n == 0 keeps
// every knob.
std::vector<std::pair<std::string, int>> rank_knobs(
    std::span<const TuningHint> hints, std::size_t top_n);

}  // namespace knobtuner
