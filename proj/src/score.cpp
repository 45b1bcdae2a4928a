#include "singalign/score.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace singalign {

namespace {

std::string fold_case(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

EditAlignment edit_align(const std::vector<std::string>& ref_in,
                         const std::vector<std::string>& hyp_in) {
  std::vector<std::string> ref(ref_in.size()), hyp(hyp_in.size());
  std::transform(ref_in.begin(), ref_in.end(), ref.begin(), fold_case);
  std::transform(hyp_in.begin(), hyp_in.end(), hyp.begin(), fold_case);

  const int n = static_cast<int>(ref.size()), m = static_cast<int>(hyp.size());
  // cost[i][j]: distance between ref[0..i) and hyp[0..j).
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  std::vector<std::vector<EditOp>> from(n + 1, std::vector<EditOp>(m + 1, EditOp::match));
  for (int i = 1; i <= n; ++i) {
    cost[i][0] = i;
    from[i][0] = EditOp::del;
  }
  for (int j = 1; j <= m; ++j) {
    cost[0][j] = j;
    from[0][j] = EditOp::ins;
  }
  // Substitution wins every tie. The ins/del tie-break is chosen to commute
  // with swapping the arguments, so D and I mirror exactly under a swap.
  const bool hyp_dominant = hyp > ref;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      const int diag = cost[i - 1][j - 1] + (match ? 0 : 1);
      const int ins = cost[i][j - 1] + 1;
      const int del = cost[i - 1][j] + 1;
      const bool prefer_ins = j != i ? j > i : hyp_dominant;
      if (diag <= ins && diag <= del) {
        cost[i][j] = diag;
        from[i][j] = match ? EditOp::match : EditOp::substitute;
      } else if (ins < del || (ins == del && prefer_ins)) {
        cost[i][j] = ins;
        from[i][j] = EditOp::ins;
      } else {
        cost[i][j] = del;
        from[i][j] = EditOp::del;
      }
    }
  }

  EditAlignment out;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    switch (from[i][j]) {
      case EditOp::match:
      case EditOp::substitute: {
        AlignedPair p{ref_in[i - 1], hyp_in[j - 1], from[i][j]};
        if (from[i][j] == EditOp::substitute) ++out.substitutions;
        out.pairs.push_back(std::move(p));
        --i;
        --j;
        break;
      }
      case EditOp::ins:
        out.pairs.push_back({"", hyp_in[j - 1], EditOp::ins});
        ++out.insertions;
        --j;
        break;
      case EditOp::del:
        out.pairs.push_back({ref_in[i - 1], "", EditOp::del});
        ++out.deletions;
        --i;
        break;
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

EvalReport score_corpus(const std::map<std::string, std::vector<std::string>>& refs,
                        const std::map<std::string, std::vector<std::string>>& hyps,
                        const CorpusManifest* manifest) {
  std::vector<std::string> missing;
  for (const auto& [id, hyp] : hyps) {
    (void)hyp;
    if (!refs.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error("hypotheses without references: " + list);
  }

  EvalReport report;
  for (const auto& [id, ref] : refs) {
    auto hit = hyps.find(id);
    if (hit == hyps.end()) throw Error("missing hypothesis for fragment '" + id + "'");
    UtteranceScore u;
    u.alignment = edit_align(ref, hit->second);
    u.ref_length = static_cast<int>(ref.size());

    report.substitutions += u.alignment.substitutions;
    report.deletions += u.alignment.deletions;
    report.insertions += u.alignment.insertions;
    report.ref_length += u.ref_length;

    if (manifest) {
      if (const FragmentMeta* frag = manifest->find(id)) {
        for (const auto& genre : frag->genres) {
          auto& sub = report.by_genre[genre];
          sub.substitutions += u.alignment.substitutions;
          sub.deletions += u.alignment.deletions;
          sub.insertions += u.alignment.insertions;
          sub.ref_length += u.ref_length;
        }
      }
    }
    report.utterances.emplace(id, std::move(u));
  }
  return report;
}

std::string EvalReport::summary(const std::string& label) const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s\tN=%lld\tS=%d\tD=%d\tI=%d\tER=%.2f%%", label.c_str(),
                static_cast<long long>(ref_length), substitutions, deletions, insertions,
                error_rate());
  return buf;
}

std::string render_alignment(const EditAlignment& alignment) {
  std::string ref_row, hyp_row, tag_row;
  for (const auto& p : alignment.pairs) {
    std::string ref = p.op == EditOp::ins ? "*" : p.ref;
    std::string hyp = p.op == EditOp::del ? "*" : p.hyp;
    std::string tag;
    switch (p.op) {
      case EditOp::match: tag = ""; break;
      case EditOp::substitute: tag = "S"; break;
      case EditOp::del: tag = "D"; break;
      case EditOp::ins: tag = "I"; break;
    }
    const size_t width = std::max({ref.size(), hyp.size(), tag.size()}) + 1;
    ref.resize(width, ' ');
    hyp.resize(width, ' ');
    tag.resize(width, ' ');
    ref_row += ref;
    hyp_row += hyp;
    tag_row += tag;
  }
  auto rstrip = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  return "REF: " + rstrip(ref_row) + "\nHYP: " + rstrip(hyp_row) + "\n     " + rstrip(tag_row) +
         "\n";
}

}  // namespace singalign
