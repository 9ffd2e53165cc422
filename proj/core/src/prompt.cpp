// SPDX-License-Identifier: Apache-2.0
#include "capqa/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "capqa/errors.hpp"
#include "internal/util.hpp"

namespace capqa::detail {
// Defined in the generated templates_embedded.cpp.
const std::string& embedded_template_manifest();
const std::map<std::string, std::string>& embedded_template_files();
}  // namespace capqa::detail

namespace capqa {

namespace {

using detail::json;

void parse_manifest(const std::string& manifest_text,
                    const std::function<std::string(const std::string& file)>& read_file,
                    std::string& version, std::map<std::string, std::string>& texts,
                    std::map<std::string, std::vector<std::string>>& required) {
  json manifest = json::parse(manifest_text, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || !manifest.contains("templates")) {
    throw TemplateError("template manifest is not a JSON object with a templates map");
  }
  version = manifest.value("version", "0");
  for (const auto& [name, entry] : manifest["templates"].items()) {
    if (!entry.contains("file")) {
      throw TemplateError("template \"" + name + "\" has no file entry");
    }
    texts[name] = read_file(entry["file"].get<std::string>());
    std::vector<std::string> names;
    for (const auto& r : entry.value("required", json::array())) {
      names.push_back(r.get<std::string>());
    }
    required[name] = std::move(names);
  }
}

}  // namespace

void TemplateLibrary::finalize() {
  std::string blob = "version=" + version_ + "\n";
  for (const auto& [name, text] : texts_) {
    blob += name + "\n" + text + "\n";
  }
  version_hash_ = detail::sha256_hex(blob);
}

TemplateLibrary TemplateLibrary::builtin() {
  TemplateLibrary lib;
  const auto& files = detail::embedded_template_files();
  parse_manifest(
      detail::embedded_template_manifest(),
      [&](const std::string& file) {
        const auto it = files.find(file);
        if (it == files.end()) throw TemplateError("embedded template file missing: " + file);
        return it->second;
      },
      lib.version_, lib.texts_, lib.required_);
  lib.finalize();
  return lib;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw TemplateError("cannot open " + manifest_path.string());
  std::stringstream manifest_buf;
  manifest_buf << manifest_in.rdbuf();

  TemplateLibrary lib;
  parse_manifest(
      manifest_buf.str(),
      [&](const std::string& file) {
        std::ifstream in(dir / file, std::ios::binary);
        if (!in) throw TemplateError("cannot open template file " + (dir / file).string());
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
      },
      lib.version_, lib.texts_, lib.required_);
  lib.finalize();
  return lib;
}

bool TemplateLibrary::has_template(const std::string& name) const {
  return texts_.count(name) > 0;
}

std::string TemplateLibrary::render(const std::string& name,
                                    const std::map<std::string, std::string>& vars,
                                    const std::vector<std::string>& deferred) const {
  const auto it = texts_.find(name);
  if (it == texts_.end()) throw TemplateError("unknown template \"" + name + "\"");

  const auto req = required_.find(name);
  if (req != required_.end()) {
    for (const auto& want : req->second) {
      const bool is_deferred = std::find(deferred.begin(), deferred.end(), want) != deferred.end();
      if (!is_deferred && vars.find(want) == vars.end()) {
        throw TemplateError("template \"" + name + "\" requires placeholder \"" + want +
                            "\" but no value was supplied");
      }
    }
  }

  const std::string& text = it->second;
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("${", pos);
    if (open == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    out.append(text, pos, open - pos);
    const std::size_t close = text.find('}', open + 2);
    if (close == std::string::npos) {
      throw TemplateError("template \"" + name + "\" has an unterminated placeholder");
    }
    const std::string var = text.substr(open + 2, close - open - 2);
    if (std::find(deferred.begin(), deferred.end(), var) != deferred.end()) {
      out.append(text, open, close - open + 1);  // left for a later round
    } else {
      const auto value = vars.find(var);
      if (value == vars.end()) {
        throw TemplateError("template \"" + name + "\" placeholder \"" + var +
                            "\" has no substitution");
      }
      out += value->second;
    }
    pos = close + 1;
  }
  return out;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kStandard: return "standard";
    case Strategy::kSummarizeThenAnswer: return "summarize";
    case Strategy::kZeroShotCot: return "cot";
    case Strategy::kPlanAndSolve: return "plan_solve";
    case Strategy::kGrounding: return "grounding";
  }
  return "unknown";
}

const char* summary_variant_name(SummaryVariant v) {
  switch (v) {
    case SummaryVariant::kC: return "c";
    case SummaryVariant::kCq: return "cq";
    case SummaryVariant::kCqa: return "cqa";
  }
  return "unknown";
}

std::string clip_length_label(double clip_length_s) {
  std::string number;
  const double rounded = std::round(clip_length_s);
  if (std::abs(clip_length_s - rounded) < 1e-9) {
    number = std::to_string(static_cast<long long>(rounded));
  } else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", clip_length_s);
    number = buf;
  }
  return number + (clip_length_s == 1.0 ? " second" : " seconds");
}

namespace {

std::map<std::string, std::string> qa_vars(const CaptionBlock& block, const QaItem& qa,
                                           double clip_length_s, const PromptContext& context) {
  return {
      {"video_duration", context.video_duration_label},
      {"clip_length", clip_length_label(clip_length_s)},
      {"captions", block.text},
      {"question", qa.question},
      {"option_a", qa.options[0]},
      {"option_b", qa.options[1]},
      {"option_c", qa.options[2]},
      {"option_d", qa.options[3]},
      {"option_e", qa.options[4]},
  };
}

void require_block(const CaptionBlock& block) {
  if (block.text.empty() || block.selected_count < 1) {
    throw ValidationError("caption block is empty");
  }
}

}  // namespace

PromptPlan build_standard(const TemplateLibrary& templates, const CaptionBlock& block,
                          const QaItem& qa, double clip_length_s, const PromptContext& context) {
  require_block(block);
  PromptPlan plan;
  plan.strategy = Strategy::kStandard;
  plan.rounds.push_back({templates.render("standard", qa_vars(block, qa, clip_length_s, context))});
  return plan;
}

PromptPlan build_summarize_then_answer(const TemplateLibrary& templates, const CaptionBlock& block,
                                       const QaItem& qa, SummaryVariant variant, int n_words,
                                       double clip_length_s, const PromptContext& context) {
  require_block(block);
  if (n_words < 1) throw ValidationError("n_words must be >= 1");

  auto vars = qa_vars(block, qa, clip_length_s, context);
  vars["num_words"] = std::to_string(n_words);

  const char* round1_template = variant == SummaryVariant::kC     ? "summarize_round1_c"
                                : variant == SummaryVariant::kCq  ? "summarize_round1_cq"
                                                                  : "summarize_round1_cqa";

  PromptPlan plan;
  plan.strategy = Strategy::kSummarizeThenAnswer;
  plan.variant = variant;
  plan.n_words = n_words;

  RoundSpec round1;
  round1.user_text = templates.render(round1_template, vars);
  plan.rounds.push_back(std::move(round1));

  // Round 2 answers from the summary alone; the captions never reappear.
  RoundSpec round2;
  round2.user_text = templates.render("summarize_round2", vars, {"summary"});
  round2.carry_slot = "summary";
  plan.rounds.push_back(std::move(round2));
  return plan;
}

namespace {

PromptPlan build_two_round_rationale(const TemplateLibrary& templates, const CaptionBlock& block,
                                     const QaItem& qa, double clip_length_s,
                                     const PromptContext& context, Strategy strategy,
                                     const char* round1_template) {
  require_block(block);
  PromptPlan plan;
  plan.strategy = strategy;

  RoundSpec round1;
  round1.user_text = templates.render(round1_template, qa_vars(block, qa, clip_length_s, context));
  plan.rounds.push_back(std::move(round1));

  RoundSpec reask;
  reask.user_text = templates.render("reask", {});
  reask.continues_conversation = true;
  plan.rounds.push_back(std::move(reask));
  return plan;
}

}  // namespace

PromptPlan build_zero_shot_cot(const TemplateLibrary& templates, const CaptionBlock& block,
                               const QaItem& qa, double clip_length_s,
                               const PromptContext& context) {
  return build_two_round_rationale(templates, block, qa, clip_length_s, context,
                                   Strategy::kZeroShotCot, "cot_round1");
}

PromptPlan build_plan_and_solve(const TemplateLibrary& templates, const CaptionBlock& block,
                                const QaItem& qa, double clip_length_s,
                                const PromptContext& context) {
  return build_two_round_rationale(templates, block, qa, clip_length_s, context,
                                   Strategy::kPlanAndSolve, "plan_solve_round1");
}

PromptPlan build_grounding(const TemplateLibrary& templates, const CaptionBlock& block,
                           const std::string& question, int index_stride,
                           const PromptContext& context) {
  require_block(block);
  if (!block.frame_indexed) {
    throw ValidationError("grounding prompts require a frame-indexed caption block");
  }
  PromptPlan plan;
  plan.strategy = Strategy::kGrounding;
  plan.rounds.push_back({templates.render("grounding", {
                                                           {"fps", context.fps_label},
                                                           {"index_stride", std::to_string(index_stride)},
                                                           {"captions", block.text},
                                                           {"question", question},
                                                       })});
  return plan;
}

}  // namespace capqa
