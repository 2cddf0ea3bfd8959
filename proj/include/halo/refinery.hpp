#pragma once

// Four-stage prompt refinement: task parsing, template construction, strategy
// optimization and final synthesis. The structured representation produced by
// the first stage is handed unchanged to the other three.

#include <array>
#include <string>
#include <string_view>

#include "halo/core.hpp"
#include "halo/gateway.hpp"
#include "halo/json_extract.hpp"
#include "halo/prompt_assets.hpp"

namespace halo {

namespace routing {
inline constexpr std::string_view task_parser = "task_parser";
inline constexpr std::string_view prompt_template = "prompt_template";
inline constexpr std::string_view prompt_optimizer = "prompt_optimizer";
inline constexpr std::string_view prompt_generator = "prompt_generator";
inline constexpr std::string_view planner = "planner";
inline constexpr std::string_view role_designer = "role_designer";
inline constexpr std::string_view judge = "judge";
inline constexpr std::string_view scorer = "scorer";
}  // namespace routing

inline constexpr std::array<std::string_view, 4> kTemplateSections = {"## Task", "## Objectives",
                                                                       "## Inputs", "## Output Format"};

inline constexpr std::string_view kJsonRepair = "Reply with valid JSON only.";

/// Replaces every `{{name}}` placeholder.
inline std::string render_prompt(std::string_view tmpl,
                                 std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
  std::string out(tmpl);
  for (auto [name, value] : vars) {
    const std::string token = "{{" + std::string(name) + "}}";
    for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos + value.size())) {
      out.replace(pos, token.size(), value);
    }
  }
  return out;
}

inline std::string representation_block(const StructuredTaskRepresentation& f) {
  return "Structured task representation:\n" + to_text(f);
}

struct RefineryOptions {
  Decoding decoding;
  TaskKind task_kind = TaskKind::Math;
  bool code_interpreter = false;
};

class PromptRefinery {
 public:
  PromptRefinery(Gateway& gateway, RefineryOptions options) : gateway_(gateway), options_(options) {}

  StructuredTaskRepresentation parse_task(const std::string& raw_query) {
    if (text::trim(raw_query).empty()) throw Error(Errc::Validation, "raw query is empty");
    auto request = options_.decoding.request(std::string(routing::task_parser),
                                             std::string(prompts::task_parser),
                                             {"User request:\n" + raw_query});
    return ask_structured(gateway_, request, parse_representation, std::string(kJsonRepair));
  }

  std::string build_template(const std::string& raw_query, const StructuredTaskRepresentation& f) {
    auto request = options_.decoding.request(std::string(routing::prompt_template),
                                             std::string(prompts::prompt_template),
                                             {"User request:\n" + raw_query + "\n\n" + representation_block(f)});
    std::string repair = "Include all four section headers:";
    for (auto m : kTemplateSections) repair += " \"" + std::string(m) + "\"";
    repair += ".";
    return ask_structured(gateway_, request, check_sections, repair);
  }

  /// System prompt sent to the optimizer; carries the tool clause only when a
  /// code interpreter is configured for a code task.
  std::string optimizer_instruction() const {
    const bool tools = options_.code_interpreter && options_.task_kind == TaskKind::Code;
    return render_prompt(prompts::prompt_optimizer,
                         {{"tool_clause", tools ? prompts::tool_clause : std::string_view{}}});
  }

  std::string optimize_prompt(const std::string& q0, const StructuredTaskRepresentation& f) {
    auto request = options_.decoding.request(std::string(routing::prompt_optimizer), optimizer_instruction(),
                                             {"Prompt frame:\n" + q0 + "\n\n" + representation_block(f)});
    return require_text(gateway_.complete(request).text, "optimized prompt");
  }

  std::string synthesize_prompt(const std::string& q_opt, const StructuredTaskRepresentation& f) {
    auto request = options_.decoding.request(std::string(routing::prompt_generator),
                                             std::string(prompts::prompt_generator),
                                             {"Optimized prompt:\n" + q_opt + "\n\n" + representation_block(f)});
    return require_text(gateway_.complete(request).text, "refined prompt");
  }

  QueryBundle refine(const std::string& raw_query) {
    QueryBundle bundle;
    bundle.raw_query = raw_query;
    bundle.representation = parse_task(raw_query);
    bundle.initial_template = build_template(raw_query, bundle.representation);
    bundle.optimized_prompt = optimize_prompt(bundle.initial_template, bundle.representation);
    bundle.refined_prompt = synthesize_prompt(bundle.optimized_prompt, bundle.representation);
    return bundle;
  }

  static StructuredTaskRepresentation parse_representation(const std::string& reply) {
    auto j = extract_json_block(reply);
    auto field = [&](const char* name) {
      auto it = j.find(name);
      if (it == j.end() || it->is_null()) throw Error(Errc::EmptyField, std::string(name) + " is missing");
      if (!it->is_string()) throw malformed(std::string(name) + " is not a string");
      auto value = text::trim(it->get<std::string>());
      if (value.empty()) throw Error(Errc::EmptyField, std::string(name) + " is blank");
      return value;
    };
    StructuredTaskRepresentation f;
    f.task_type = field("task_type");
    f.core_intent = field("core_intent");
    auto it = j.find("key_details");
    if (it == j.end() || it->is_null()) throw Error(Errc::EmptyField, "key_details is missing");
    if (it->is_string()) {
      f.key_details.push_back(it->get<std::string>());
    } else if (it->is_array()) {
      for (const auto& d : *it) {
        if (!d.is_string()) throw malformed("key_details entries must be strings");
        f.key_details.push_back(d.get<std::string>());
      }
    } else {
      throw malformed("key_details is not a list");
    }
    std::erase_if(f.key_details, [](const std::string& d) { return text::trim(d).empty(); });
    if (f.key_details.empty()) throw Error(Errc::EmptyField, "key_details is empty");
    return f;
  }

  static std::string check_sections(const std::string& reply) {
    for (auto marker : kTemplateSections) {
      if (reply.find(marker) == std::string::npos) {
        throw Error(Errc::MissingSection, "prompt template lacks section '" + std::string(marker) + "'");
      }
    }
    return reply;
  }

 private:
  static std::string require_text(std::string reply, const char* what) {
    if (text::trim(reply).empty()) throw Error(Errc::EmptyField, std::string(what) + " is empty");
    return reply;
  }

  Gateway& gateway_;
  RefineryOptions options_;
};

/// Bundle used when refinement is ablated: the raw query is passed through verbatim.
inline QueryBundle unrefined_bundle(const std::string& raw_query) {
  if (text::trim(raw_query).empty()) throw Error(Errc::Validation, "raw query is empty");
  QueryBundle bundle;
  bundle.raw_query = raw_query;
  bundle.refined_prompt = raw_query;
  return bundle;
}

}  // namespace halo
