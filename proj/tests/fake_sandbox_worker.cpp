// Stand-in for the external sandbox worker. Evaluates DSL programs, except
// for a few magic program texts that misbehave on purpose:
//   __hang__     never answers
//   __crash__    exits without answering
//   __garbage__  answers with a non-JSON line
//   __string__   answers ok with a non-integer output
//   __wrong_id__ answers with someone else's id
//   __memory__   answers with the memory cap it was started with

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "indukt/dsl.hpp"

int main() {
  using nlohmann::json;
  std::string line;
  while (std::getline(std::cin, line)) {
    const auto req = json::parse(line);
    const auto id = req.at("id").get<std::int64_t>();
    const auto program = req.at("program").get<std::string>();
    json resp{{"id", id}};
    if (program == "__hang__") {
      std::this_thread::sleep_for(std::chrono::hours(1));
    } else if (program == "__crash__") {
      std::_Exit(3);
    } else if (program == "__garbage__") {
      std::cout << "this is not json" << std::endl;
      continue;
    } else if (program == "__string__") {
      resp["status"] = "ok";
      resp["output"] = json::array({"a", 1});
    } else if (program == "__wrong_id__") {
      resp["id"] = id + 1000;
      resp["status"] = "ok";
      resp["output"] = json::array();
    } else if (program == "__memory__") {
      const char* cap = std::getenv("INDUKT_SANDBOX_MEMORY_MIB");
      resp["status"] = "ok";
      resp["output"] = json::array({cap ? std::atoll(cap) : -1});
    } else {
      const auto input = req.at("input").get<indukt::dsl::List>();
      const auto r = indukt::dsl::evaluate_text(program, input);
      if (r.status == indukt::dsl::EvalStatus::Ok) {
        resp["status"] = "ok";
        resp["output"] = *r.output;
      } else {
        resp["status"] = "error";
        resp["error"] = r.diagnostic;
      }
    }
    std::cout << resp.dump() << std::endl;
  }
  return 0;
}
