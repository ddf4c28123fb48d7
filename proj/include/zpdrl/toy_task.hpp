#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zpdrl/dataset.hpp"
#include "zpdrl/policy.hpp"

namespace zpdrl::toy {

// Single-digit arithmetic "what is a+b?" / "what is a×b?" with a templated
// trace "<think>plus</think>\boxed{c}" (or "times"). The trace names the
// operation only: the linear policy sees the prompt solely through its key,
// so any operand echo in the trace would be unlearnable.
enum class Op { add, mul };

enum class Split { sft, rl, eval };

Split parse_split(const std::string& name);
std::string to_string(Split split);

struct ToyTaskConfig {
  std::uint64_t split_seed = 0;
  std::size_t prompt_buckets = policy::kDefaultPromptBuckets;
  /// Operands range over [min_operand, 9].
  int min_operand = 1;
};

std::string prompt_text(int a, Op op, int b);
std::string solution_text(int a, Op op, int b);
int answer(int a, Op op, int b);

/// Splits are assigned per prompt key (not per prompt), so two prompts that
/// hash to the same key always land in the same split and the key sets of
/// different splits are disjoint. Keys map to eval/rl/sft in a 2:4:4 ratio.
Split split_of_key(std::size_t key, const ToyTaskConfig& config);

/// Every problem of the given split, in (op, a, b) order.
std::vector<Problem> problems(Split split, const ToyTaskConfig& config);

/// True when no two positions of the trace share (previous token, position
/// bucket) while demanding different next tokens, i.e. the linear policy
/// can drive its loss on this trace toward zero.
bool memorizable(const policy::Vocab& vocab, const std::vector<policy::TokenId>& trace);

}  // namespace zpdrl::toy
