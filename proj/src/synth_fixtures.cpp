#include "spirit/synth_fixtures.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace spirit::synth {

namespace {

// Portable draws: the standard distributions are implementation-defined.
std::uint64_t pick(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

constexpr std::array<std::string_view, 24> kWords = {
    "coffee", "weekend", "traffic", "garden", "election", "market", "season", "training",
    "recipe", "podcast", "weather", "budget", "concert", "library", "project", "neighbors",
    "league", "update", "commute", "festival", "review", "tuition", "harvest", "deadline"};

constexpr std::array<std::string_view, 5> kLikert = {"Strongly disagree", "Somewhat disagree", "Neither agree nor disagree",
                                                     "Somewhat agree", "Strongly agree"};

std::string section(std::string_view text, std::string_view start, std::string_view end) {
  auto a = text.find(start);
  if (a == std::string_view::npos) return {};
  a += start.size();
  auto b = end.empty() ? std::string_view::npos : text.find(end, a);
  return std::string(trim(text.substr(a, b == std::string_view::npos ? std::string_view::npos : b - a)));
}

std::vector<ResponseOption> parse_options(std::string_view block) {
  std::vector<ResponseOption> out;
  for (auto line : split_lines(block)) {
    line = trim(line);
    if (line.size() < 3 || line.front() != '(') continue;
    auto close = line.find(')');
    if (close == std::string_view::npos) continue;
    try {
      out.push_back({std::stoi(std::string(line.substr(1, close - 1))), std::string(trim(line.substr(close + 1)))});
    } catch (const std::exception&) {
    }
  }
  return out;
}

Judgment judge(std::string value, Confidence c, std::string rationale) {
  return Judgment{std::move(value), c, std::move(rationale)};
}

std::string filler_narrative(std::string_view lead) {
  return fmt::format(
      "{} The posts read as everyday updates about work, errands and local events, with occasional comments on "
      "public affairs. The writer tends to share practical observations rather than arguments, and tends to reply "
      "briefly when others disagree.\n\nAcross the history the same handful of interests recur: community news, "
      "household plans, and a steady interest in how institutions affect ordinary routines. These impressions "
      "are tentative and rest on a small number of posts.",
      lead);
}

}  // namespace

int class_of(const Traits& t) { return t[0] + 2 * t[1] + 4 * t[2]; }

Traits traits_of(int latent_class) { return {latent_class & 1, (latent_class >> 1) & 1, (latent_class >> 2) & 1}; }

int LatentModel::answer(const std::string& question_id, int latent_class) const {
  auto it = answers.find(question_id);
  if (it == answers.end()) throw DataError(fmt::format("latent model has no question '{}'", question_id));
  return it->second.at(static_cast<std::size_t>(latent_class));
}

Json to_json(const LatentModel& m) {
  Json answers = Json::object();
  for (const auto& [q, codes] : m.answers) answers[q] = Json(std::vector<int>(codes.begin(), codes.end()));
  Json j = Json::object();
  j["seed"] = m.seed;
  j["survey"] = to_json(m.survey);
  j["answers"] = std::move(answers);
  return j;
}

LatentModel latent_model_from_json(const Json& j) {
  try {
    LatentModel m;
    m.seed = j.value("seed", std::uint64_t{0});
    m.survey = survey_from_json(j.at("survey"));
    for (const auto& [q, codes] : j.at("answers").items()) {
      if (codes.size() != kClasses) throw DataError(fmt::format("latent model: '{}' needs {} codes", q, kClasses));
      std::array<int, kClasses> a{};
      for (int k = 0; k < kClasses; ++k) a[static_cast<std::size_t>(k)] = codes[static_cast<std::size_t>(k)].get<int>();
      m.answers[q] = a;
    }
    return m;
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("latent model: {}", e.what()));
  }
}

Population gen_population(std::uint64_t seed, int n_users, int n_questions) {
  if (n_users < 0 || n_questions < 0) throw UsageError("gen_population: counts must be non-negative");
  std::mt19937_64 rng(seed);
  Population pop;
  pop.model.seed = seed;
  pop.model.survey.survey_id = "synth";
  pop.model.survey.title = "Synthetic panel survey";
  pop.model.survey.topic = "local transit funding";

  for (int j = 0; j < n_questions; ++j) {
    SurveyQuestion q;
    q.question_id = fmt::format("q{:02d}", j + 1);
    if (j % 2 == 0) {
      q.wording = fmt::format("Item {}: How much do you agree that statement {} describes your community?", j + 1,
                              j + 1);
      for (int c = 0; c < 5; ++c) q.options.push_back({c + 1, std::string(kLikert[static_cast<std::size_t>(c)])});
      q.ordinal = true;
    } else {
      q.wording = fmt::format("Item {}: Would you support proposal {}?", j + 1, j + 1);
      q.options = {{1, "Yes"}, {2, "No"}};
    }
    q.options.push_back({98, "Not sure"});
    q.sentinel_codes = {98};
    auto scale = q.scale_codes();
    std::array<int, kClasses> codes{};
    for (auto& c : codes) {
      c = unit(rng) < 0.05 ? 98 : scale[pick(rng, scale.size())];
    }
    pop.model.answers[q.question_id] = codes;
    pop.model.survey.questions.push_back(std::move(q));
  }

  constexpr std::array<std::string_view, 2> kGender = {"female", "male"};
  constexpr std::array<std::string_view, 5> kRace = {"white", "black", "hispanic", "asian", "other"};
  constexpr std::array<std::string_view, 3> kEducation = {"hs_or_less", "some_college", "ba_plus"};
  constexpr std::array<std::string_view, 4> kIncome = {"under_50k", "50k_100k", "100k_150k", "over_150k"};
  constexpr std::array<std::string_view, 3> kUrban = {"urban", "suburban", "rural"};
  constexpr std::array<std::string_view, 3> kIdeology = {"liberal", "moderate", "conservative"};
  constexpr std::array<std::string_view, 4> kRegion = {"northeast", "midwest", "south", "west"};
  auto choose = [&](auto const& arr) { return std::string(arr[pick(rng, arr.size())]); };

  const auto base = std::chrono::sys_days{std::chrono::year{2021} / 1 / 1};
  for (int u = 0; u < n_users; ++u) {
    auto id = fmt::format("u{:03d}", u + 1);
    Traits t{};
    for (auto& bit : t) bit = static_cast<int>(pick(rng, 2));
    pop.traits[id] = t;

    const auto n_posts = 3 + static_cast<int>(pick(rng, 4));
    const auto home = pick(rng, 3);  // 0 reddit only, 1 twitter only, 2 both
    std::vector<Post> posts;
    for (int k = 0; k < n_posts; ++k) {
      Post p;
      p.user_id = id;
      p.platform = home == 0 ? Platform::reddit : home == 1 ? Platform::twitter : (pick(rng, 2) ? Platform::reddit : Platform::twitter);
      p.timestamp = std::chrono::time_point_cast<std::chrono::seconds>(base) +
                    std::chrono::seconds(static_cast<std::int64_t>(pick(rng, 3ULL * 365 * 86400)));
      const auto n_words = 8 + pick(rng, 13);
      for (std::uint64_t w = 0; w < n_words; ++w) {
        if (w) p.text += ' ';
        p.text += kWords[pick(rng, kWords.size())];
      }
      posts.push_back(std::move(p));
    }
    for (int k = 0; k < kTraits; ++k) {
      auto& p = posts[pick(rng, posts.size())];
      p.text += fmt::format(" [[marker:t{}={}]]", k, t[static_cast<std::size_t>(k)]);
    }
    pop.posts.insert(pop.posts.end(), posts.begin(), posts.end());

    PanelRecord rec;
    rec.user_id = id;
    DemographicPersona d;
    d.age = 18 + static_cast<int>(pick(rng, 70));
    d.gender = choose(kGender);
    d.race = choose(kRace);
    d.education = choose(kEducation);
    auto income = choose(kIncome);
    if (unit(rng) >= 0.1) d.income = income;
    d.urbanicity = choose(kUrban);
    d.political_ideology = choose(kIdeology);
    rec.demographics = d;
    rec.attributes["region"] = choose(kRegion);
    pop.panel.push_back(std::move(rec));

    for (const auto& q : pop.model.survey.questions) {
      pop.truth.push_back({id, q.question_id, pop.model.answer(q.question_id, class_of(t))});
    }
  }

  // Feasible margins: the shares a random positive reweighting of the sample produces.
  if (!pop.panel.empty()) {
    std::vector<double> w;
    for (std::size_t i = 0; i < pop.panel.size(); ++i) w.push_back(0.4 + 1.6 * unit(rng));
    double total = 0.0;
    for (double x : w) total += x;
    for (std::string variable : {"gender", "age_group", "education", "region"}) {
      std::map<std::string, double> shares;
      for (std::size_t i = 0; i < pop.panel.size(); ++i) {
        const auto& r = pop.panel[i];
        std::string cat = variable == "region"      ? r.attributes.at("region")
                          : variable == "age_group" ? *age_group(*r.demographics->age)
                                                    : *demographic_value(*r.demographics, variable);
        shares[cat] += w[i] / total;
      }
      MarginTarget t{variable, {}};
      for (const auto& [cat, p] : shares) t.categories.emplace_back(cat, p);
      pop.targets.push_back(std::move(t));
    }
  }

  Json results = Json::array();
  for (int k = 0; k < 7; ++k) {
    results.push_back(Json{{"title", fmt::format("Coverage item {} on {}", k + 1, pop.model.survey.topic)},
                           {"snippet", fmt::format("Summary paragraph {} describing recent developments.", k + 1)},
                           {"url", fmt::format("https://news.example.org/item/{}", k + 1)}});
  }
  pop.search_fixture = Json{{"default", results}};
  return pop;
}

FixtureFiles write_population(const Population& pop, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  FixtureFiles f{dir / "posts_reddit.jsonl", dir / "posts_twitter.jsonl", dir / "panel.jsonl",
                 dir / "truth.jsonl",        dir / "survey.json",         dir / "targets.json",
                 dir / "latent_model.json",  dir / "backend.json",        dir / "search.json"};
  std::vector<Post> reddit, twitter;
  for (const auto& p : pop.posts) (p.platform == Platform::reddit ? reddit : twitter).push_back(p);
  write_posts_jsonl(f.posts_reddit, reddit);
  write_posts_jsonl(f.posts_twitter, twitter);
  write_panel(f.panel, pop.panel);
  write_truth(f.truth, pop.truth);
  write_text_file(f.survey, to_json(pop.model.survey).dump(2) + "\n");
  write_text_file(f.targets, to_json(pop.targets).dump(2) + "\n");
  write_text_file(f.latent_model, to_json(pop.model).dump(2) + "\n");
  Json backend = Json::object();
  backend["kind"] = "mock";
  backend["model_name"] = "marker-mock";
  backend["seed"] = pop.model.seed;
  backend["mock"] = Json{{"type", "marker"}, {"latent_model", "latent_model.json"}};
  write_text_file(f.backend, backend.dump(2) + "\n");
  write_text_file(dir / "search_fixture.json", pop.search_fixture.dump(2) + "\n");
  write_text_file(f.search, Json{{"kind", "fixture"}, {"file", "search_fixture.json"}}.dump(2) + "\n");
  return f;
}

std::array<int, kTraits> decode_markers(std::string_view text) {
  std::array<int, kTraits> out{-1, -1, -1};
  constexpr std::string_view kOpen = "[[marker:t";
  for (auto pos = text.find(kOpen); pos != std::string_view::npos; pos = text.find(kOpen, pos + 1)) {
    auto rest = text.substr(pos + kOpen.size());
    if (rest.size() < 5 || rest[1] != '=' || rest.substr(3, 2) != "]]") continue;
    int k = rest[0] - '0';
    int v = rest[2] - '0';
    if (k >= 0 && k < kTraits && (v == 0 || v == 1)) out[static_cast<std::size_t>(k)] = v;
  }
  return out;
}

PersonaProfile persona_for(const std::array<int, kTraits>& t) {
  PersonaProfile p;
  for (std::size_t i = 0; i < kBig5Count; ++i) {
    p.big5[i] = judge("moderate", Confidence::medium, "Posting style gives mixed cues.");
  }
  p.big5[0] = t[0] < 0 ? judge("unknown", Confidence::low, "No posts bear on this trait.")
                       : judge(t[0] ? "high" : "low", Confidence::high, "Posts repeatedly signal this level.");
  for (auto& b : p.primal) b = PrimalBelief{Lean::balanced, Confidence::medium, "Few posts speak to this belief."};
  p.primal[0] = t[1] < 0 ? PrimalBelief{Lean::unclear, Confidence::low, "No evidence either way."}
                         : PrimalBelief{t[1] ? Lean::leans_a : Lean::leans_b, Confidence::high,
                                        "The outlook in posts is consistent."};
  p.salient_identities = {{"local resident", Confidence::medium, "Mentions neighborhood events."}};
  p.core_values = {{"practicality", Confidence::medium, "Prefers concrete plans."}};
  p.education_and_work = {{"works a regular schedule", Confidence::low, "Mentions commutes and deadlines."}};
  p.family_and_relationships = {};
  p.turning_points_or_themes = {{"recurring interest in civic updates", Confidence::medium, "Several posts."}};
  p.politics_and_society = {{"local services", "Wants services to work reliably.", Confidence::medium,
                             "Comments on budgets and transit."}};
  p.work_and_career = {};
  p.technology_and_social_media = {};
  p.other_recurrent_themes = {{"weekend plans", "Enjoys community events.", Confidence::low, "A few posts."}};
  p.tone = judge("measured", Confidence::medium, "Short, even-tempered posts.");
  p.conflict_style = judge("mixed", Confidence::medium, "Replies vary with context.");
  p.information_orientation =
      t[2] < 0 ? judge("unclear", Confidence::low, "No posts about news habits.")
               : judge(t[2] ? "news_junkie" : "low_information", Confidence::high, "Posting shows this news habit.");
  p.overall_uncertainty_comment = "Inferences rest on a small set of posts and remain tentative.";
  p.notable_absences = "Little discussion of family or career history.";
  p.narrative = filler_narrative("This person comes across as steady and practical.");
  return p;
}

std::array<int, kTraits> decode_persona(const Json& persona) {
  std::array<int, kTraits> out{-1, -1, -1};
  try {
    auto openness = persona.at("personality_big5").at("openness").at("approx_level").get<std::string>();
    if (openness == "high") out[0] = 1;
    if (openness == "low") out[0] = 0;
    auto good = persona.at("primal_world_beliefs").at("good_vs_bad").at("value").get<std::string>();
    if (good == "leans_good") out[1] = 1;
    if (good == "leans_bad") out[1] = 0;
    auto info = persona.at("interaction_style").at("information_orientation").at("value").get<std::string>();
    if (info == "news_junkie") out[2] = 1;
    if (info == "low_information") out[2] = 0;
  } catch (const Json::exception&) {
  }
  return out;
}

PersonaProfile random_profile(std::mt19937_64& rng) {
  auto conf = [&] { return static_cast<Confidence>(pick(rng, 3)); };
  auto word = [&] { return std::string(kWords[pick(rng, kWords.size())]); };
  PersonaProfile p;
  constexpr std::array<std::string_view, 4> kLevels = {"low", "moderate", "high", "unknown"};
  for (auto& j : p.big5) j = judge(std::string(kLevels[pick(rng, 4)]), conf(), "Rationale " + word());
  for (auto& b : p.primal) b = PrimalBelief{static_cast<Lean>(pick(rng, 4)), conf(), "Rationale " + word()};
  auto items = [&](std::vector<EvidenceItem>& v) {
    v.resize(pick(rng, 4));
    for (auto& e : v) e = EvidenceItem{word() + " " + word(), conf(), "Because " + word()};
  };
  auto opinions = [&](std::vector<Opinion>& v) {
    v.resize(pick(rng, 4));
    for (auto& o : v) o = Opinion{word(), "Stance on " + word(), conf(), "Because " + word()};
  };
  items(p.salient_identities);
  items(p.core_values);
  items(p.education_and_work);
  items(p.family_and_relationships);
  items(p.turning_points_or_themes);
  opinions(p.politics_and_society);
  opinions(p.work_and_career);
  opinions(p.technology_and_social_media);
  opinions(p.other_recurrent_themes);
  p.tone = judge(word(), conf(), "Tone " + word());
  p.conflict_style = judge(std::string(kConflictStyles[pick(rng, kConflictStyles.size())]), conf(), "Style " + word());
  p.information_orientation = judge(std::string(kInformationOrientations[pick(rng, kInformationOrientations.size())]),
                                    conf(), "Habit " + word());
  p.overall_uncertainty_comment = "Uncertain about " + word();
  p.notable_absences = "Nothing about " + word();
  p.narrative = filler_narrative("A randomly generated persona about " + word() + ".");
  return p;
}

MarkerMockBackend::MarkerMockBackend(LatentModel model, std::uint64_t seed, int invalid_first)
    : model_(std::move(model)), seed_(seed), invalid_first_(invalid_first) {
  for (const auto& q : model_.survey.questions) question_by_wording_[q.wording] = q.question_id;
}

std::unique_ptr<MarkerMockBackend> MarkerMockBackend::from_config(const BackendConfig& cfg) {
  Json model;
  if (cfg.mock.contains("model")) {
    model = cfg.mock.at("model");
  } else if (cfg.mock.contains("latent_model")) {
    auto j = parse_json(read_text_file(cfg.mock.at("latent_model").get<std::string>()));
    if (!j) throw UsageError("marker mock: latent_model is not valid JSON");
    model = std::move(*j);
  } else {
    throw UsageError("marker mock: settings need 'latent_model' or 'model'");
  }
  return std::make_unique<MarkerMockBackend>(latent_model_from_json(model), cfg.seed,
                                             cfg.mock.value("invalid_first", 0));
}

std::string MarkerMockBackend::fingerprint() const {
  return fmt::format("marker-mock#{}", hex64(fnv1a64(to_json(model_).dump(), seed_ ^ 0xcbf29ce484222325ULL)));
}

std::size_t MarkerMockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

Completion MarkerMockBackend::paint(const ChatRequest& req) {
  int n = 0;
  {
    std::lock_guard lock(mutex_);
    n = seen_[request_hash(req, seed_)]++;
  }
  if (n < invalid_first_) return Completion{"{\"personality_big5\": {}}\n(no separator)", std::nullopt, std::nullopt};
  return Completion{serialize_artifact(persona_for(decode_markers(req.user_prompt))), std::nullopt, std::nullopt};
}

std::string MarkerMockBackend::answer(std::string_view prompt, bool timely) const {
  auto persona_text = section(prompt, "PERSONA (JSON):\n", "\n\nPERSONA (Narrative):");
  auto wording = section(prompt, "QUESTION:\n", "\n\nRESPONSE OPTIONS:");
  auto options = parse_options(section(prompt, "RESPONSE OPTIONS:\n", ""));
  if (options.empty()) throw BackendRefusal("marker mock: prompt lists no options");

  auto persona = parse_json(persona_text);
  auto qid_it = question_by_wording_.find(wording);
  const auto qhash = fnv1a64(wording, seed_);

  int code = 0;
  Confidence conf = Confidence::low;
  bool decoded = false;
  std::array<int, kTraits> t{-1, -1, -1};
  if (persona && persona->contains("personality_big5")) {
    t = decode_persona(*persona);
    decoded = std::none_of(t.begin(), t.end(), [](int x) { return x < 0; });
  }
  if (decoded && qid_it != question_by_wording_.end()) {
    const int k = class_of({t[0], t[1], t[2]});
    code = model_.answer(qid_it->second, k);
    conf = static_cast<Confidence>((qhash + static_cast<std::uint64_t>(k)) % 3);
  } else {
    // No usable persona signal: a fixed pseudo-random pick keyed on the persona text.
    std::vector<int> substantive;
    for (const auto& o : options) {
      if (o.code < 90) substantive.push_back(o.code);
    }
    if (substantive.empty()) substantive.push_back(options.front().code);
    code = substantive[fnv1a64(persona_text, qhash) % substantive.size()];
  }
  auto label = std::find_if(options.begin(), options.end(), [&](const auto& o) { return o.code == code; });
  if (label == options.end()) throw BackendRefusal(fmt::format("marker mock: code {} not offered", code));

  Json out = Json::object();
  out["value"] = code;
  out["label"] = label->label;
  out["confidence"] = std::string(to_string(conf));
  out["reason"] = decoded ? "The persona's stated outlook points to this option." : "Little to go on; a guess.";
  if (timely) out["influenced_by_search"] = decoded && t[2] == 1;
  return out.dump();
}

Completion MarkerMockBackend::complete(const ChatRequest& req) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  const auto& u = req.user_prompt;
  auto has = [&](std::string_view s) { return u.find(s) != std::string::npos; };

  if (req.system_prompt.find("expert computational social scientist") != std::string::npos) return paint(req);

  std::string text;
  if (has("Before searching the web")) {
    auto persona = parse_json(section(u, "PERSONA (JSON):\n", "\n\nPERSONA (Narrative):"));
    auto t = persona ? decode_persona(*persona) : std::array<int, kTraits>{-1, -1, -1};
    Json j = Json::object();
    j["knowledge_level"] = t[2] == 1 ? "moderate" : t[2] == 0 ? "minimal" : "none";
    j["what_i_know"] = "I have seen a few headlines about it.";
    j["where_i_heard_it"] = t[2] == 1 ? "news" : "social media";
    j["prior_impression"] = "unknown";
    text = j.dump();
  } else if (has("Generate 3-5 web search queries")) {
    auto topic = section(u, "TOPIC:\n", "");
    auto persona = parse_json(section(u, "PERSONA (JSON):\n", "\n\nPERSONA (Narrative):"));
    auto t = persona ? decode_persona(*persona) : std::array<int, kTraits>{0, 0, 0};
    const int k = class_of({std::max(t[0], 0), std::max(t[1], 0), std::max(t[2], 0)});
    constexpr std::array<std::string_view, 5> kSuffix = {"latest news", "explained", "analysis", "reactions",
                                                         "timeline"};
    Json qs = Json::array();
    for (int i = 0; i < 3 + k % 3; ++i) qs.push_back(fmt::format("{} {}", topic, kSuffix[static_cast<std::size_t>(i)]));
    text = Json{{"queries", qs}}.dump();
  } else if (has("Below are search results")) {
    auto results = section(u, "SEARCH RESULTS:\n", "\n\nOUTPUT (JSON only):");
    Json points = Json::array();
    for (auto line : split_lines(results)) {
      if (line.size() > 1 && line.front() == '[' && points.size() < 3) {
        auto close = line.find("] ");
        if (close != std::string_view::npos) points.push_back(std::string(line.substr(close + 2)));
      }
    }
    if (points.empty()) points.push_back("No results came back.");
    Json j = Json::object();
    j["key_points"] = std::move(points);
    j["timeframe"] = "recent months";
    j["source_fit"] = "The outlets look familiar enough to trust for basics.";
    j["updated_impression"] = "unchanged";
    text = j.dump();
  } else if (has("Now answer the survey question as the person")) {
    text = answer(u, true);
  } else if (has("You are participating in a survey. Answer the questions")) {
    text = answer(u, false);
  } else {
    throw BackendRefusal("marker mock: unrecognised prompt");
  }
  return Completion{std::move(text), std::nullopt, std::nullopt};
}

BackendConfig scripted_mock(const Json& rules, std::uint64_t seed) {
  BackendConfig cfg;
  cfg.kind = BackendKind::mock;
  cfg.model_name = "scripted-mock";
  cfg.seed = seed;
  cfg.mock = Json{{"type", "script"}, {"rules", rules}};
  return cfg;
}

}  // namespace spirit::synth
