#include "zpdrl/toy_task.hpp"

#include <map>
#include <stdexcept>
#include <utility>

#include "zpdrl/rng.hpp"

namespace zpdrl::toy {

namespace {
const char* op_symbol(Op op) { return op == Op::add ? "+" : "×"; }
const char* op_name(Op op) { return op == Op::add ? "add" : "mul"; }
}  // namespace

Split parse_split(const std::string& name) {
  if (name == "sft") return Split::sft;
  if (name == "rl") return Split::rl;
  if (name == "eval") return Split::eval;
  throw std::invalid_argument("unknown split '" + name + "' (expected sft, rl or eval)");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::sft:
      return "sft";
    case Split::rl:
      return "rl";
    case Split::eval:
      return "eval";
  }
  return "?";
}

int answer(int a, Op op, int b) { return op == Op::add ? a + b : a * b; }

std::string prompt_text(int a, Op op, int b) {
  return "what is " + std::to_string(a) + op_symbol(op) + std::to_string(b) + "?";
}

std::string solution_text(int a, Op op, int b) {
  const std::string c = std::to_string(answer(a, op, b));
  return std::string("<think>") + (op == Op::add ? "plus" : "times") + "</think>\\boxed{" + c + "}";
}

Split split_of_key(std::size_t key, const ToyTaskConfig& config) {
  const auto bucket = derive_seed(config.split_seed, key, 0x70795441534bULL) % 10;
  if (bucket < 2) return Split::eval;
  if (bucket < 6) return Split::rl;
  return Split::sft;
}

std::vector<Problem> problems(Split split, const ToyTaskConfig& config) {
  std::vector<Problem> out;
  for (Op op : {Op::add, Op::mul}) {
    for (int a = config.min_operand; a <= 9; ++a) {
      for (int b = config.min_operand; b <= 9; ++b) {
        Problem p;
        p.prompt = prompt_text(a, op, b);
        if (split_of_key(policy::prompt_key(p.prompt, config.prompt_buckets), config) != split) continue;
        p.id = std::string("toy-") + op_name(op) + "-" + std::to_string(a) + "-" + std::to_string(b);
        p.gold = std::to_string(answer(a, op, b));
        p.source = "toy-arith";
        p.solution = solution_text(a, op, b);
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

bool memorizable(const policy::Vocab& vocab, const std::vector<policy::TokenId>& trace) {
  std::map<std::pair<policy::TokenId, std::size_t>, policy::TokenId> next_for_state;
  policy::TokenId prev = vocab.stop();
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto state = std::make_pair(prev, policy::position_bucket(t));
    auto [it, inserted] = next_for_state.emplace(state, trace[t]);
    if (!inserted && it->second != trace[t]) return false;
    prev = trace[t];
  }
  return true;
}

}  // namespace zpdrl::toy
