#include "indukt/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "indukt/util.hpp"

namespace indukt::corpus {

using nlohmann::json;

namespace {

std::string where(const std::string& task_id) {
  return task_id.empty() ? std::string("corpus") : "task '" + task_id + "'";
}

void require_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                  const std::string& context) {
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ParseError(context + ": unknown field '" + key + "'");
  }
}

List parse_list(const json& j, const std::string& context) {
  if (!j.is_array()) throw ParseError(context + ": expected an array of integers");
  List out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ParseError(context + ": non-integer element");
    out.push_back(v.get<dsl::Value>());
  }
  return out;
}

Task parse_task(const json& j, std::size_t position) {
  if (!j.is_object()) {
    throw ParseError("tasks[" + std::to_string(position) + "]: expected an object");
  }
  std::string id;
  if (auto it = j.find("id"); it != j.end() && it->is_string()) id = it->get<std::string>();
  const std::string ctx =
      id.empty() ? "tasks[" + std::to_string(position) + "]" : where(id);

  require_keys(j, {"id", "description", "examples", "reference_program"}, ctx);
  if (!j.contains("id") || !j["id"].is_string()) throw ParseError(ctx + ": missing string 'id'");
  if (!j.contains("description") || !j["description"].is_string()) {
    throw ParseError(ctx + ": missing string 'description'");
  }
  if (!j.contains("examples") || !j["examples"].is_array()) {
    throw ParseError(ctx + ": missing array 'examples'");
  }

  Task task;
  task.id = id;
  task.description = j["description"].get<std::string>();
  std::size_t k = 0;
  for (const auto& ex : j["examples"]) {
    const std::string ex_ctx = ctx + " example " + std::to_string(++k);
    if (!ex.is_object()) throw ParseError(ex_ctx + ": expected an object");
    require_keys(ex, {"input", "output"}, ex_ctx);
    if (!ex.contains("input") || !ex.contains("output")) {
      throw ParseError(ex_ctx + ": needs 'input' and 'output'");
    }
    task.examples.push_back({parse_list(ex["input"], ex_ctx + " input"),
                             parse_list(ex["output"], ex_ctx + " output")});
  }
  if (auto it = j.find("reference_program"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(ctx + ": 'reference_program' must be a string or null");
    task.reference_program = it->get<std::string>();
  }
  return task;
}

void check_list(const Task& task, const List& xs, std::size_t index, const char* side) {
  if (xs.size() > kMaxListLength) {
    throw ValidationError(task.id, "example " + std::to_string(index) + " " + side +
                                       " longer than " + std::to_string(kMaxListLength));
  }
  for (auto v : xs) {
    if (v < kMinValue || v > kMaxValue) {
      throw ValidationError(task.id, "example " + std::to_string(index) + " " + side +
                                         " value " + std::to_string(v) + " out of range");
    }
  }
}

}  // namespace

ValidationError::ValidationError(std::string task_id, const std::string& message)
    : std::runtime_error(where(task_id) + ": " + message), task_id_(std::move(task_id)) {}

void validate(const Task& task) {
  if (task.id.empty()) throw ValidationError(task.id, "empty id");
  if (trim(task.description).empty()) {
    throw ValidationError(task.id, "missing ground-truth description");
  }
  if (task.examples.size() != static_cast<std::size_t>(kTrialsPerTask)) {
    throw ValidationError(task.id, "expected " + std::to_string(kTrialsPerTask) +
                                       " examples, found " +
                                       std::to_string(task.examples.size()));
  }
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    check_list(task, task.examples[i].input, i + 1, "input");
    check_list(task, task.examples[i].output, i + 1, "output");
  }
  if (!task.reference_program) return;

  dsl::Program program;
  try {
    program = dsl::parse(*task.reference_program);
  } catch (const dsl::ParseError& e) {
    throw ValidationError(task.id, std::string("reference program does not parse: ") + e.what());
  }
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    const auto& ex = task.examples[i];
    const auto result = dsl::evaluate(program, ex.input);
    if (result.status != dsl::EvalStatus::Ok) {
      throw ValidationError(task.id, "reference program fails on example " +
                                         std::to_string(i + 1) + ": " + result.diagnostic);
    }
    if (*result.output != ex.output) {
      throw ValidationError(task.id, "reference program mismatch on example " +
                                         std::to_string(i + 1) + ": expected " +
                                         dsl::format_list(ex.output) + ", got " +
                                         dsl::format_list(*result.output));
    }
  }
}

Corpus::Corpus(std::vector<Task> tasks) : tasks_(std::move(tasks)) {
  std::set<std::string, std::less<>> ids;
  for (const auto& task : tasks_) {
    validate(task);
    if (!ids.insert(task.id).second) throw ValidationError(task.id, "duplicate task id");
  }
}

const Task& Corpus::at(std::string_view id) const {
  if (const Task* t = find(id)) return *t;
  throw std::out_of_range("no task '" + std::string(id) + "' in corpus");
}

const Task* Corpus::find(std::string_view id) const noexcept {
  for (const auto& t : tasks_)
    if (t.id == id) return &t;
  return nullptr;
}

std::string Corpus::fingerprint() const { return sha256_hex(serialize_corpus(*this)); }

Corpus parse_corpus(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed corpus JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("corpus: top level must be an object");
  require_keys(doc, {"tasks"}, "corpus");
  if (!doc.contains("tasks") || !doc["tasks"].is_array()) {
    throw ParseError("corpus: missing array 'tasks'");
  }
  std::vector<Task> tasks;
  std::size_t position = 0;
  for (const auto& t : doc["tasks"]) tasks.push_back(parse_task(t, position++));
  return Corpus(std::move(tasks));
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

std::string serialize_corpus(const Corpus& corpus) {
  json tasks = json::array();
  for (const auto& t : corpus.tasks()) {
    json examples = json::array();
    for (const auto& ex : t.examples) examples.push_back({{"input", ex.input}, {"output", ex.output}});
    tasks.push_back({{"id", t.id},
                     {"description", t.description},
                     {"examples", std::move(examples)},
                     {"reference_program", t.reference_program ? json(*t.reference_program)
                                                               : json(nullptr)}});
  }
  return json{{"tasks", std::move(tasks)}}.dump(2) + "\n";
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_corpus(corpus);
}

TrialSpec trial(const Task& task, int n) {
  if (n < 1 || n > kTrialsPerTask || static_cast<std::size_t>(n) > task.examples.size()) {
    throw std::out_of_range("trial index " + std::to_string(n) + " outside 1.." +
                            std::to_string(kTrialsPerTask));
  }
  TrialSpec spec;
  spec.task_id = task.id;
  spec.trial_index = n;
  spec.training.assign(task.examples.begin(), task.examples.begin() + (n - 1));
  spec.test = task.examples[static_cast<std::size_t>(n - 1)];
  return spec;
}

std::vector<List> oracle_outputs(const Task& task, std::span<const List> inputs) {
  if (!task.reference_program) {
    throw std::invalid_argument(where(task.id) + ": no reference program");
  }
  const auto program = dsl::parse(*task.reference_program);
  std::vector<List> outputs;
  outputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto r = dsl::evaluate(program, in);
    if (r.status != dsl::EvalStatus::Ok) {
      throw std::runtime_error(where(task.id) + ": reference program failed: " + r.diagnostic);
    }
    outputs.push_back(std::move(*r.output));
  }
  return outputs;
}

}  // namespace indukt::corpus
