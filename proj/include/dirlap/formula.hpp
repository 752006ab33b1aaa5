#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "dirlap/errors.hpp"

// Per-category formula language:
//   response '~' block ('|' block)*
// with one block per category; a block is a '+'-separated list of `1`
// (intercept) and covariate names, e.g. "y ~ 1 + v1 | 1 + v2".

namespace dirlap {

struct Term {
  bool intercept = false;
  std::string name;  // empty for the intercept

  bool operator==(const Term& other) const {
    return intercept == other.intercept && name == other.name;
  }
  std::string label() const { return intercept ? "intercept" : name; }
};

struct FormulaSpec {
  std::string response;
  std::vector<std::vector<Term>> per_category_terms;

  int n_categories() const {
    return static_cast<int>(per_category_terms.size());
  }
  int n_coefficients() const {
    int j = 0;
    for (const auto& block : per_category_terms)
      j += static_cast<int>(block.size());
    return j;
  }

  // Canonical rendering; parse_formula(render(), C) round-trips.
  std::string render() const {
    std::string out = response + " ~ ";
    for (std::size_t c = 0; c < per_category_terms.size(); ++c) {
      if (c > 0) out += " | ";
      for (std::size_t t = 0; t < per_category_terms[c].size(); ++t) {
        if (t > 0) out += " + ";
        out += per_category_terms[c][t].intercept ? "1"
                                                  : per_category_terms[c][t].name;
      }
    }
    return out;
  }

  bool operator==(const FormulaSpec& other) const {
    return response == other.response &&
           per_category_terms == other.per_category_terms;
  }
};

namespace detail {

class FormulaLexer {
 public:
  explicit FormulaLexer(const std::string& text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void expect(char c, const char* what) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c)
      throw parse_error(std::string("expected ") + what, pos_);
    ++pos_;
  }
  // identifier: [A-Za-z_][A-Za-z0-9_.]*  |  the literal "1"
  std::string token() {
    skip_space();
    const std::size_t start = pos_;
    if (pos_ >= text_.size())
      throw parse_error("expected a term, found end of input", pos_);
    const char first = text_[pos_];
    if (first == '1') {
      ++pos_;
      if (pos_ < text_.size() && is_ident_char(text_[pos_]))
        throw parse_error("malformed term", start);
      return "1";
    }
    if (!std::isalpha(static_cast<unsigned char>(first)) && first != '_')
      throw parse_error("malformed term", start);
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }
  std::size_t position() const { return pos_; }

 private:
  static bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }
  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline FormulaSpec parse_formula(const std::string& text, int n_categories) {
  if (n_categories < 2)
    throw domain_error("parse_formula: need at least 2 categories");
  detail::FormulaLexer lex(text);

  FormulaSpec spec;
  spec.response = lex.token();
  if (spec.response == "1")
    throw parse_error("response name may not be '1'", 0);
  lex.expect('~', "'~'");

  for (;;) {
    std::vector<Term> block;
    for (;;) {
      const std::string tok = lex.token();
      Term term;
      if (tok == "1")
        term.intercept = true;
      else
        term.name = tok;
      for (const Term& seen : block)
        if (seen == term)
          throw validation_error("parse_formula: duplicate term '" +
                                 term.label() + "' in category block " +
                                 std::to_string(spec.per_category_terms.size() + 1));
      block.push_back(std::move(term));
      if (lex.peek() == '+') {
        lex.expect('+', "'+'");
        continue;
      }
      break;
    }
    spec.per_category_terms.push_back(std::move(block));
    if (lex.peek() == '|') {
      lex.expect('|', "'|'");
      continue;
    }
    break;
  }
  if (!lex.at_end())
    throw parse_error("unexpected trailing input", lex.position());
  if (spec.n_categories() != n_categories)
    throw arity_error("parse_formula: formula has " +
                      std::to_string(spec.n_categories()) +
                      " category blocks, expected " +
                      std::to_string(n_categories));
  return spec;
}

}  // namespace dirlap
