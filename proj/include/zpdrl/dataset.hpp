#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace zpdrl {

using json = nlohmann::json;

/// One task instance. `image_ref` is carried through untouched; `solution`
/// holds a reference reasoning trace for supervised data.
struct Problem {
  std::string id;
  std::string prompt;
  std::string gold;
  std::optional<std::string> image_ref;
  std::string source;
  std::optional<std::string> solution;
};

void to_json(json& j, const Problem& p);
void from_json(const json& j, Problem& p);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Calls fn(line_number, parsed_object) for every non-blank line.
/// Throws DatasetError on malformed JSON, tagged with file and line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// Reads Problem records. Accepts plain Problem lines as well as curated
/// lines ({"problem": {...}, ...}); header lines are skipped. Rejects
/// duplicate ids and golds that do not parse.
std::vector<Problem> load_problems(const std::filesystem::path& path);

void write_problems(const std::filesystem::path& path, const std::vector<Problem>& problems);

/// Compact single-line JSON dump with a trailing newline.
std::string jsonl_line(const json& j);

}  // namespace zpdrl
