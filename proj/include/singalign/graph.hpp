#pragma once

#include <string>
#include <vector>

#include "singalign/am.hpp"
#include "singalign/lexicon.hpp"
#include "singalign/lm.hpp"

namespace singalign {

struct Arc {
  int dst = -1;
  int pdf = -1;       // -1 marks a non-emitting (epsilon) arc
  int phone = -1;     // phone whose state this arc enters
  int position = -1;  // emitting-state index within the phone
  int word = -1;      // output label into DecodingGraph::words; -1 = epsilon
  double weight = 0.0;  // natural-log transition/pronunciation score
};

struct DecodingGraph {
  std::vector<std::vector<Arc>> arcs;  // by source state
  int start = 0;
  std::vector<uint8_t> final_state;
  std::vector<std::string> words;     // output vocabulary
  const NgramModel* lm = nullptr;     // set for decode graphs; scores applied on the fly

  int num_states() const { return static_cast<int>(arcs.size()); }
  int add_state();
  void add_arc(int src, const Arc& arc);
};

// Linear transcript graph with all pronunciation variants in parallel and
// optional silence between words.
DecodingGraph compile_training_graph(const std::vector<std::string>& transcript,
                                     const Lexicon& lexicon, const AcousticModel& model,
                                     double optional_silence_prob = 0.5);

// Word-loop graph over the lexicon/LM intersection; LM histories are applied
// dynamically by the decoder rather than expanded statically.
DecodingGraph build_decode_graph(const Lexicon& lexicon, const NgramModel& lm,
                                 const AcousticModel& model,
                                 double optional_silence_prob = 0.5);

void save_graph(const DecodingGraph& graph, const std::string& path);
DecodingGraph load_graph(const std::string& path);  // lm left unset

}  // namespace singalign
