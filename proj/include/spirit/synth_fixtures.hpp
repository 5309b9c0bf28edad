#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "spirit/bank_store.hpp"
#include "spirit/calibration.hpp"
#include "spirit/corpus.hpp"
#include "spirit/llm_gateway.hpp"
#include "spirit/persona_schema.hpp"
#include "spirit/survey.hpp"

namespace spirit::synth {

inline constexpr int kTraits = 3;
inline constexpr int kClasses = 1 << kTraits;

using Traits = std::array<int, kTraits>;

int class_of(const Traits& t);
Traits traits_of(int latent_class);

/// Latent model: answer code for every (question, class), plus the survey it belongs to.
struct LatentModel {
  std::uint64_t seed = 0;
  SurveySpec survey;
  std::map<std::string, std::array<int, kClasses>> answers;  // question_id -> code per class

  int answer(const std::string& question_id, int latent_class) const;
};

Json to_json(const LatentModel& m);
LatentModel latent_model_from_json(const Json& j);

struct Population {
  LatentModel model;
  std::vector<Post> posts;
  std::vector<PanelRecord> panel;
  std::vector<TruthRecord> truth;
  std::map<std::string, Traits> traits;
  std::vector<MarginTarget> targets;  // feasible margins over gender, age_group, education, region
  Json search_fixture;
};

/// Pure function of its arguments. Every user carries one marker per trait,
/// "[[marker:t<k>=<0|1>]]", somewhere in their posts.
Population gen_population(std::uint64_t seed, int n_users, int n_questions);

struct FixtureFiles {
  std::filesystem::path posts_reddit, posts_twitter, panel, truth, survey, targets, latent_model, backend, search;
};

/// Writes the population in pipeline formats under `dir`, plus a marker
/// mock backend config and a fixture search config.
FixtureFiles write_population(const Population& pop, const std::filesystem::path& dir);

/// Traits found in a document ("[[marker:t0=1]]" ...); -1 where absent.
std::array<int, kTraits> decode_markers(std::string_view text);

/// A valid persona encoding the traits: openness approx_level high/low,
/// good_vs_bad leans, information_orientation news_junkie/low_information.
/// Absent traits (-1) become "unknown"/"unclear" with low confidence.
PersonaProfile persona_for(const std::array<int, kTraits>& traits);
/// Inverse of persona_for; -1 where a trait is not encoded.
std::array<int, kTraits> decode_persona(const Json& persona);

/// Random schema-valid profile with varied confidences and list sizes.
PersonaProfile random_profile(std::mt19937_64& rng);

/// Backend that "infers" personas by reading markers and answers surveys
/// from the latent model. Stateless, so results never depend on call order.
///
/// Settings: {"type": "marker", "latent_model": "<file>"} or {"model": {...}}.
/// "invalid_first": n makes the first n attempts at each painter request fail.
class MarkerMockBackend final : public ChatBackend {
 public:
  MarkerMockBackend(LatentModel model, std::uint64_t seed, int invalid_first = 0);
  static std::unique_ptr<MarkerMockBackend> from_config(const BackendConfig& cfg);

  Completion complete(const ChatRequest& req) override;
  std::string fingerprint() const override;

  std::size_t calls() const;

 private:
  Completion paint(const ChatRequest& req);
  std::string answer(std::string_view user_prompt, bool timely) const;

  LatentModel model_;
  std::uint64_t seed_;
  int invalid_first_;
  std::map<std::string, std::string> question_by_wording_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, int> seen_;
  std::size_t calls_ = 0;
};

/// Mock config answering from a script: [{"match": ..., "responses": [...]}].
BackendConfig scripted_mock(const Json& rules, std::uint64_t seed = 0);

}  // namespace spirit::synth
