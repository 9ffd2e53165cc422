// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capqa/corpus.hpp"
#include "capqa/sampler.hpp"

namespace capqa {

enum class Role { kUser, kAssistant };

/// One chat message. Content is fully rendered: non-empty, no unresolved
/// "${name}" placeholders.
struct ChatTurn {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatTurn&) const = default;
};

enum class Strategy {
  kStandard,
  kSummarizeThenAnswer,
  kZeroShotCot,
  kPlanAndSolve,
  kGrounding,
};

/// Summary-input variants: captions only, captions + question, or
/// captions + question + answer options.
enum class SummaryVariant { kC, kCq, kCqa };

const char* strategy_name(Strategy s);
const char* summary_variant_name(SummaryVariant v);

/// One round of prompting. Rounds after the first consume the previous
/// round's output, either by continuing the conversation (the previous
/// output enters as an assistant turn) or by substituting it into a
/// placeholder slot of a fresh conversation.
struct RoundSpec {
  std::string user_text;
  /// Placeholder name (e.g. "summary") in user_text to fill with the
  /// previous round's output before sending.
  std::optional<std::string> carry_slot;
  /// When true the round is sent as a continuation: prior user/assistant
  /// turns precede this round's user turn.
  bool continues_conversation = false;
  std::optional<double> temperature_override;
};

/// The ordered multi-turn plan a strategy produces for one question.
struct PromptPlan {
  Strategy strategy = Strategy::kStandard;
  std::optional<SummaryVariant> variant;  // present iff SummarizeThenAnswer
  std::optional<int> n_words;             // present iff SummarizeThenAnswer
  std::vector<RoundSpec> rounds;
};

/// Versioned template store. Templates are plain text with ${name}
/// placeholders; the manifest declares the required names per template.
/// The default set ships embedded in the library and mirrors
/// assets/templates/ exactly.
class TemplateLibrary {
 public:
  /// The embedded default templates.
  static TemplateLibrary builtin();
  /// Loads manifest.json plus the template files it names from a directory.
  static TemplateLibrary load(const std::filesystem::path& dir);

  /// Renders a template, substituting every ${name}. Throws TemplateError on
  /// an unknown template, a missing binding, or a leftover placeholder.
  /// Placeholders named in `deferred` survive rendering untouched (used for
  /// cross-round slots such as the summary).
  std::string render(const std::string& name,
                     const std::map<std::string, std::string>& vars,
                     const std::vector<std::string>& deferred = {}) const;

  bool has_template(const std::string& name) const;
  const std::string& version() const { return version_; }
  /// Content hash over the manifest version and every template's bytes;
  /// recorded in run manifests as part of the experiment identity.
  const std::string& version_hash() const { return version_hash_; }

 private:
  TemplateLibrary() = default;
  void finalize();

  std::string version_;
  std::string version_hash_;
  std::map<std::string, std::string> texts_;                 // name -> template text
  std::map<std::string, std::vector<std::string>> required_; // name -> required vars
};

/// Surface forms for the duration/FPS phrases the templates parameterize.
struct PromptContext {
  std::string video_duration_label = "3 minute";
  std::string fps_label = "1";
};

/// "1 second" / "2 seconds" / "0.5 seconds" for the ${clip_length} slot.
std::string clip_length_label(double clip_length_s);

PromptPlan build_standard(const TemplateLibrary& templates, const CaptionBlock& block,
                          const QaItem& qa, double clip_length_s,
                          const PromptContext& context = {});

PromptPlan build_summarize_then_answer(const TemplateLibrary& templates,
                                       const CaptionBlock& block, const QaItem& qa,
                                       SummaryVariant variant, int n_words,
                                       double clip_length_s,
                                       const PromptContext& context = {});

PromptPlan build_zero_shot_cot(const TemplateLibrary& templates, const CaptionBlock& block,
                               const QaItem& qa, double clip_length_s,
                               const PromptContext& context = {});

PromptPlan build_plan_and_solve(const TemplateLibrary& templates, const CaptionBlock& block,
                                const QaItem& qa, double clip_length_s,
                                const PromptContext& context = {});

/// Grounding prompt over a frame-indexed block. Throws ValidationError when
/// the block was rendered without numbering.
PromptPlan build_grounding(const TemplateLibrary& templates, const CaptionBlock& block,
                           const std::string& question, int index_stride,
                           const PromptContext& context = {});

}  // namespace capqa
