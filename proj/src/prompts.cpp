#include "indukt/prompts.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "indukt/util.hpp"

namespace indukt::prompts {

namespace {

// Generated from data/prompts/*.txt at configure time.
#include "prompt_data.inc"

std::string one_line(std::string_view text) {
  std::string out;
  for (char c : trim(text)) out += (c == '\n' || c == '\r') ? ' ' : c;
  return out;
}

std::string primitive_list() {
  std::string out;
  for (const auto& p : dsl::primitives()) {
    if (!out.empty()) out += ", ";
    out += p.name;
    out += '/';
    out += std::to_string(p.arity);
  }
  return out;
}

std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + one_line(items[i]);
  }
  return out;
}

void require(bool present, Stage stage, const char* field) {
  if (!present) {
    throw PromptError(std::string(providers::to_string(stage)) + " prompt needs '" + field + "'");
  }
}

class Renderer {
public:
  Renderer(Stage stage, const PromptContext& ctx) : stage_(stage), ctx_(ctx) {}

  std::string operator()(std::string_view text) const {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto open = text.find("{{", pos);
      if (open == std::string_view::npos) {
        out.append(text.substr(pos));
        break;
      }
      const auto close = text.find("}}", open + 2);
      if (close == std::string_view::npos) throw PromptError("unterminated placeholder in template");
      out.append(text.substr(pos, open - pos));
      out += slot(text.substr(open + 2, close - open - 2));
      pos = close + 2;
    }
    return out;
  }

private:
  std::string slot(std::string_view name) const {
    auto missing = [&]() -> std::string {
      throw PromptError(std::string(providers::to_string(stage_)) + " template uses '{{" +
                        std::string(name) + "}}' but the context has no value for it");
    };
    if (name == "examples") {
      if (!ctx_.examples) return missing();
      return ctx_.examples->empty() ? std::string("(no examples yet)")
                                    : format_examples(*ctx_.examples);
    }
    if (name == "hypotheses") return ctx_.hypotheses ? numbered(*ctx_.hypotheses) : missing();
    if (name == "n_hypotheses") {
      return ctx_.hypotheses ? std::to_string(ctx_.hypotheses->size()) : missing();
    }
    if (name == "n_summaries") return std::to_string(kSummaryCount);
    if (name == "hypothesis") return ctx_.hypothesis ? one_line(*ctx_.hypothesis) : missing();
    if (name == "program") return ctx_.program ? *ctx_.program : missing();
    if (name == "error") return ctx_.error ? *ctx_.error : missing();
    if (name == "ground_truth") return ctx_.ground_truth ? one_line(*ctx_.ground_truth) : missing();
    if (name == "primitives") return primitive_list();
    throw PromptError("unknown placeholder '{{" + std::string(name) + "}}'");
  }

  Stage stage_;
  const PromptContext& ctx_;
};

void append_messages(std::vector<Message>& out, const Template& t, const Renderer& render) {
  if (!t.system.empty()) out.push_back({providers::Role::System, render(t.system)});
  if (!t.user.empty()) out.push_back({providers::Role::User, render(t.user)});
}

}  // namespace

Template parse_template(std::string_view text) {
  Template t;
  std::string* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line == "### system") {
      section = &t.system;
      continue;
    }
    if (line == "### user") {
      section = &t.user;
      continue;
    }
    if (!section) {
      if (trim(line).empty()) continue;
      throw PromptError("template text before a '### system' or '### user' header");
    }
    *section += line;
    *section += '\n';
  }
  t.system = trim(t.system);
  t.user = trim(t.user);
  return t;
}

const PromptSet& PromptSet::defaults() {
  static const PromptSet set = [] {
    PromptSet s;
    for (const auto& [name, text] : kBundledTemplates) {
      s.templates_[providers::stage_from_string(name)] = parse_template(text);
    }
    return s;
  }();
  return set;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  PromptSet s = defaults();
  for (auto stage : {Stage::Generator, Stage::Summarizer, Stage::Implementor, Stage::Refinement,
                     Stage::Direct, Stage::Evaluator}) {
    const auto path = dir / (std::string(providers::to_string(stage)) + ".txt");
    std::ifstream in(path);
    if (!in) continue;
    std::ostringstream buf;
    buf << in.rdbuf();
    s.set(stage, parse_template(buf.str()));
  }
  return s;
}

const Template& PromptSet::get(Stage stage) const {
  auto it = templates_.find(stage);
  if (it == templates_.end()) {
    throw PromptError("no template for stage " + std::string(providers::to_string(stage)));
  }
  return it->second;
}

void PromptSet::set(Stage stage, Template t) { templates_[stage] = std::move(t); }

std::string format_examples(std::span<const corpus::Example> examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i) out += '\n';
    out += dsl::format_list(examples[i].input) + " -> " + dsl::format_list(examples[i].output);
  }
  return out;
}

std::vector<Message> render_prompt(Stage stage, const PromptContext& ctx, const PromptSet& set) {
  switch (stage) {
    case Stage::Generator:
    case Stage::Direct:
      require(ctx.examples.has_value(), stage, "examples");
      break;
    case Stage::Summarizer:
      require(ctx.hypotheses && !ctx.hypotheses->empty(), stage, "hypotheses");
      break;
    case Stage::Implementor:
      require(ctx.hypothesis.has_value(), stage, "hypothesis");
      require(ctx.examples.has_value(), stage, "examples");
      break;
    case Stage::Refinement:
      require(ctx.hypothesis.has_value(), stage, "hypothesis");
      require(ctx.examples.has_value(), stage, "examples");
      require(ctx.program.has_value(), stage, "program");
      require(ctx.error.has_value(), stage, "error");
      break;
    case Stage::Evaluator:
      require(ctx.hypothesis.has_value(), stage, "hypothesis");
      require(ctx.ground_truth && !trim(*ctx.ground_truth).empty(), stage, "ground_truth");
      break;
  }

  std::vector<Message> out;
  if (stage == Stage::Refinement) {
    append_messages(out, set.get(Stage::Implementor), Renderer(Stage::Implementor, ctx));
    out.push_back({providers::Role::Assistant, "```\n" + *ctx.program + "\n```"});
  }
  append_messages(out, set.get(stage), Renderer(stage, ctx));
  return out;
}

std::optional<std::string> extract_tagged(std::span<const Message> messages, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  for (const auto& m : messages) {
    const auto b = m.content.find(open);
    if (b == std::string::npos) continue;
    const auto e = m.content.find(close, b + open.size());
    if (e == std::string::npos) continue;
    return m.content.substr(b + open.size(), e - b - open.size());
  }
  return std::nullopt;
}

}  // namespace indukt::prompts
