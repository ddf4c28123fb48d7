#include "zpdrl/dataset.hpp"

#include <fstream>
#include <set>

#include "zpdrl/verifier.hpp"

namespace zpdrl {

void to_json(json& j, const Problem& p) {
  j = json{{"id", p.id}, {"prompt", p.prompt}, {"gold", p.gold}, {"source", p.source}};
  j["image_ref"] = p.image_ref ? json(*p.image_ref) : json(nullptr);
  if (p.solution) j["solution"] = *p.solution;
}

void from_json(const json& j, Problem& p) {
  p.id = j.at("id").get<std::string>();
  p.prompt = j.at("prompt").get<std::string>();
  p.gold = j.at("gold").get<std::string>();
  p.source = j.value("source", std::string{});
  p.image_ref.reset();
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) p.image_ref = it->get<std::string>();
  p.solution.reset();
  if (auto it = j.find("solution"); it != j.end() && !it->is_null()) p.solution = it->get<std::string>();
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      fn(line_no, j);
    } catch (const DatasetError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::vector<Problem> load_problems(const std::filesystem::path& path) {
  std::vector<Problem> out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    if (j.contains("header")) return;
    Problem p = j.contains("problem") ? j.at("problem").get<Problem>() : j.get<Problem>();
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!seen.insert(p.id).second) throw DatasetError(where + ": duplicate problem id '" + p.id + "'");
    if (!verifier::parse_answer(p.gold)) {
      throw DatasetError(where + ": gold answer '" + p.gold + "' does not parse");
    }
    out.push_back(std::move(p));
  });
  return out;
}

void write_problems(const std::filesystem::path& path, const std::vector<Problem>& problems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& p : problems) out << jsonl_line(json(p));
}

std::string jsonl_line(const json& j) { return j.dump() + "\n"; }

}  // namespace zpdrl
