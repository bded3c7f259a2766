#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmtgin/graph.hpp"
#include "hmtgin/tasks.hpp"

namespace hmtgin {

// Names used by the community-question-answering schema.
namespace cqa {
inline constexpr const char* kQuestion = "question";
inline constexpr const char* kAnswer = "answer";
inline constexpr const char* kUser = "user";
inline constexpr const char* kTag = "tag";

inline constexpr const char* kAsks = "asks";              // user -> question
inline constexpr const char* kOwnerOf = "owner_of";       // user -> answer
inline constexpr const char* kAnswerTo = "answer_to";     // answer -> question
inline constexpr const char* kTaggedWith = "tagged_with"; // question -> tag
inline constexpr const char* kCommentOn = "comment_on";   // user -> question
inline constexpr const char* kDuplicate = "duplicate";    // question -> question

inline constexpr const char* kTagRecommendation = "tr";
inline constexpr const char* kDuplicateDetection = "dqd";
inline constexpr const char* kAnswerRecommendation = "ar";
inline constexpr const char* kAnswerScore = "asc";
inline constexpr const char* kUserReputation = "urc";

inline constexpr std::size_t kAnswerScoreClasses = 4;
inline constexpr std::size_t kReputationClasses = 5;

Schema make_schema();
}  // namespace cqa

class SyntheticSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SyntheticSpec {
  std::size_t questions = 45;
  std::size_t answered_questions = 45;  // the rest receive no answers
  std::size_t answers_min = 8;
  std::size_t answers_max = 8;
  std::size_t users = 80;
  std::size_t tags = 15;
  std::size_t max_tags_per_question = 2;
  std::size_t duplicate_pairs = 6;
  std::size_t comments_per_question = 1;
  std::size_t feature_dim = 16;

  // Planted-signal strengths, in units of the per-coordinate feature noise.
  double feature_noise = 0.5;
  double tag_signal = 3.0;
  double duplicate_noise = 0.3;
  double score_signal = 2.0;
  double answer_topic_signal = 0.0;  // answers echo their question's tags
  double reputation_signal = 2.0;

  // Accepted answer = argmax of score_weight * score
  //                   + reputation_weight * owner reputation + noise * Gumbel.
  double acceptance_score_weight = 1.0;
  double acceptance_reputation_weight = 0.25;
  double acceptance_noise = 0.05;

  std::uint64_t seed = 1;

  std::size_t answer_count_upper_bound() const;
  void validate() const;
};

// Parses `key = value` lines naming SyntheticSpec fields. Unknown keys throw.
SyntheticSpec parse_synthetic_spec(const std::string& text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
std::string serialize_synthetic_spec(const SyntheticSpec& spec);

struct AttributeTable {
  std::string node_type;
  std::string name;
  std::vector<double> values;  // indexed by local node index
};

// Attribute values withheld from the node features.
struct GroundTruth {
  std::vector<AttributeTable> tables;

  const AttributeTable& get(const std::string& node_type,
                            const std::string& name) const;
};

inline constexpr const char* kScoreAttribute = "score";
inline constexpr const char* kAcceptedAttribute = "accepted";
inline constexpr const char* kReputationAttribute = "reputation";

std::string serialize_ground_truth(const GroundTruth& truth);
GroundTruth parse_ground_truth(const std::string& text);

struct SyntheticData {
  MultiRelationalGraph graph;  // every edge, including held-out targets
  GroundTruth truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

struct CqaDataset {
  MultiRelationalGraph graph;  // link-task target edges removed
  std::vector<TaskSpec> tasks;
  std::vector<std::string> report;
};

// Builds the five tasks (those with usable data) from a full graph and its
// ground truth, and the message-passing graph with held-out links hidden.
CqaDataset build_cqa_dataset(const MultiRelationalGraph& full,
                             const GroundTruth& truth, std::uint64_t seed);

// Mean over questions of the Spearman correlation between answer score and
// the accepted indicator, within each question's answer list.
double acceptance_score_correlation(const MultiRelationalGraph& g,
                                    const GroundTruth& truth);

}  // namespace hmtgin
