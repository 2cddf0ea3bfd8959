#pragma once

// Gateway-backed agents: role-specific inference agents, the judging and
// scoring pair, and the role designer.

#include <string>
#include <string_view>
#include <vector>

#include "halo/core.hpp"
#include "halo/gateway.hpp"
#include "halo/json_extract.hpp"
#include "halo/prompt_assets.hpp"
#include "halo/refinery.hpp"
#include "halo/search.hpp"

namespace halo {

inline std::string subtask_context(const Subtask& subtask, const QueryBundle& bundle) {
  return "Subtask " + std::to_string(subtask.index) + ": " + subtask.description + "\n\nTask prompt:\n" +
         bundle.prompt() + "\n\n" + representation_block(bundle.representation);
}

/// Parses a role list reply: a JSON array of role objects, or an object with a "roles" array.
inline std::vector<RoleSpec> parse_roles(const std::string& reply) {
  json arr;
  if (auto found = find_last_json(reply, JsonShape::Array)) {
    arr = *found;
  } else if (auto obj = find_last_json(reply, JsonShape::Object)) {
    if (obj->contains("roles") && (*obj)["roles"].is_array()) {
      arr = (*obj)["roles"];
    } else if (obj->contains("role_name")) {
      arr = json::array({*obj});
    }
  }
  if (!arr.is_array()) throw malformed("no JSON role array in reply");
  if (arr.empty()) throw Error(Errc::NoRoles, "role designer returned no roles");
  std::vector<RoleSpec> roles;
  for (const auto& item : arr) {
    if (!item.is_object()) throw malformed("role entries must be objects");
    RoleSpec r;
    r.role_name = text::trim(item.value("role_name", std::string{}));
    r.system_prompt = item.value("system_prompt", std::string{});
    r.rationale = item.value("rationale", std::string{});
    if (r.role_name.empty() || text::trim(r.system_prompt).empty()) {
      throw malformed("role entries need a role_name and a system_prompt");
    }
    roles.push_back(std::move(r));
  }
  return roles;
}

inline StatusLabel parse_judge_reply(const std::string& reply) {
  std::string word = text::trim(reply);
  if (auto obj = find_last_json(reply, JsonShape::Object)) {
    for (const char* key : {"status", "label"}) {
      if (obj->contains(key) && (*obj)[key].is_string()) word = (*obj)[key].get<std::string>();
    }
  }
  try {
    return parse_status_label(word);
  } catch (const Error&) {
    throw malformed("judge reply is not one of success/fail/continue: '" + reply.substr(0, 200) + "'");
  }
}

inline QualityScore parse_scorer_reply(const std::string& reply) {
  auto j = extract_json_block(reply);
  auto it = j.find("score");
  if (it == j.end() || !it->is_number()) throw malformed("scorer reply lacks a numeric score");
  try {
    return QualityScore::make(it->get<double>());
  } catch (const Error& e) {
    throw malformed(e.what());
  }
}

/// Judging and scoring agents applied to one output.
inline Evaluation evaluate_output(Gateway& gateway, const Decoding& decoding, const std::string& output_text,
                                  const Subtask& subtask, const QueryBundle& bundle) {
  if (text::trim(output_text).empty()) throw Error(Errc::Validation, "cannot evaluate an empty output");
  std::vector<std::string> messages{subtask_context(subtask, bundle) + "\n\nOutput under evaluation:\n" +
                                    output_text};
  Evaluation eval;
  eval.label = ask_structured(gateway,
                              decoding.request(std::string(routing::judge), std::string(prompts::judge), messages),
                              parse_judge_reply, "Reply with exactly one word: success, fail, or continue.");
  eval.score = ask_structured(gateway,
                              decoding.request(std::string(routing::scorer), std::string(prompts::scorer), messages),
                              parse_scorer_reply, "Reply with valid JSON only: {\"score\": <number in [0, 1]>}.");
  return eval;
}

/// SearchAgents implementation that routes every call through a Gateway.
class GatewayAgents {
 public:
  GatewayAgents(Gateway& gateway, Decoding decoding) : gateway_(gateway), decoding_(decoding) {}

  std::string run(const RoleSpec& role, const Subtask& subtask, const QueryBundle& bundle,
                  std::string_view previous) {
    std::string message = subtask_context(subtask, bundle);
    if (!previous.empty()) message += "\n\nOutput of the previous agent on this path:\n" + std::string(previous);
    auto reply = gateway_.complete(decoding_.request(role.role_name, role.system_prompt, {message}));
    if (text::trim(reply.text).empty()) throw malformed("agent '" + role.role_name + "' returned an empty output");
    return reply.text;
  }

  Evaluation evaluate(const std::string& output, const Subtask& subtask, const QueryBundle& bundle) {
    return evaluate_output(gateway_, decoding_, output, subtask, bundle);
  }

  RoleSpec follow_up_role(const Subtask& subtask, const QueryBundle& bundle, std::string_view latest) {
    std::string message = subtask_context(subtask, bundle) + "\n\nLatest output:\n" + std::string(latest) +
                          "\n\n" + std::string(prompts::simulation_role);
    auto roles = ask_structured(gateway_,
                                decoding_.request(std::string(routing::role_designer),
                                                  std::string(prompts::role_designer), {message}),
                                parse_roles, std::string(kJsonRepair));
    return roles.front();
  }

 private:
  Gateway& gateway_;
  Decoding decoding_;
};

static_assert(SearchAgents<GatewayAgents>);

}  // namespace halo
