#include "recomp/score/kern.hpp"

#include <algorithm>
#include <cctype>

namespace recomp {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

bool subset_chars_only(std::string_view tok) {
  for (char ch : tok) {
    if (std::isdigit(static_cast<unsigned char>(ch))) continue;
    if (ch == '.' || ch == '#' || ch == '-' || ch == 'r') continue;
    char lower = char(std::tolower(static_cast<unsigned char>(ch)));
    if (lower >= 'a' && lower <= 'g') continue;
    return false;
  }
  return true;
}

int letter_semitone(char lower) {
  switch (lower) {
    case 'c': return 0;
    case 'd': return 2;
    case 'e': return 4;
    case 'f': return 5;
    case 'g': return 7;
    case 'a': return 9;
    case 'b': return 11;
  }
  return -1;
}

struct Token {
  Rational duration;
  int pitch = -1;  // -1 = rest
};

// Strict subset token: duration digits + optional dot + (pitch | 'r').
Token parse_token(std::string_view tok, int line) {
  size_t i = 0;
  while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
  if (i == 0) throw ParseError(line, "token '" + std::string(tok) + "' has no duration");
  long long digits = 0;
  for (size_t j = 0; j < i; ++j) digits = digits * 10 + (tok[j] - '0');
  if (digits != 1 && digits != 2 && digits != 4 && digits != 8 && digits != 16)
    throw ParseError(line, "unsupported duration " + std::to_string(digits) + " in token '" +
                               std::string(tok) + "'");
  Rational dur(4, digits);
  if (i < tok.size() && tok[i] == '.') {
    dur *= Rational(3, 2);
    ++i;
  }
  std::string_view rest = tok.substr(i);
  if (rest.empty())
    throw ParseError(line, "token '" + std::string(tok) + "' has no pitch or rest");
  Token out;
  out.duration = dur;
  if (rest == "r") return out;

  size_t p = 0;
  char first = rest[0];
  char lower = char(std::tolower(static_cast<unsigned char>(first)));
  if (letter_semitone(lower) < 0)
    throw ParseError(line, "bad pitch letter in token '" + std::string(tok) + "'");
  while (p < rest.size() && rest[p] == first) ++p;
  size_t letters = p;
  int accidental = 0;
  while (p < rest.size() && (rest[p] == '#' || rest[p] == '-')) {
    accidental += rest[p] == '#' ? 1 : -1;
    ++p;
  }
  if (p != rest.size())
    throw ParseError(line, "bad pitch spelling in token '" + std::string(tok) + "'");
  // kern octaves: "c"=C4, each extra lowercase letter up an octave;
  // "C"=C3, each extra uppercase letter down an octave.
  int base;
  if (std::islower(static_cast<unsigned char>(first)))
    base = 60 + 12 * int(letters - 1);
  else
    base = 48 - 12 * int(letters - 1);
  int midi = base + letter_semitone(lower) + accidental;
  if (midi < 0 || midi > 127)
    throw ParseError(line, "pitch out of MIDI range in token '" + std::string(tok) + "'");
  out.pitch = midi;
  return out;
}

}  // namespace

Rational kern_duration_quarters(std::string_view token, int line) {
  return parse_token(token, line).duration;
}

int kern_pitch_midi(std::string_view token, int line) {
  Token t = parse_token(token, line);
  if (t.pitch < 0) throw ParseError(line, "token is a rest");
  return t.pitch;
}

ParseResult parse_kern_subset(std::string_view text) {
  ParseResult result;
  int spines = 0;
  bool terminated = false;
  std::vector<std::vector<NoteEvent>> pending;  // events of the open measure, per spine
  std::vector<Rational> clock;                  // per-spine position in the open measure

  auto close_measure = [&]() {
    Rational len(0);
    for (const Rational& c : clock) len = std::max(len, c);
    if (len == Rational(0)) return;  // nothing between barlines
    for (int s = 0; s < spines; ++s) {
      Measure m;
      m.events = std::move(pending[size_t(s)]);
      m.length = len;
      result.score.parts[size_t(s)].measures.push_back(std::move(m));
      pending[size_t(s)].clear();
      clock[size_t(s)] = Rational(0);
    }
  };

  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (pos > text.size() && line.empty()) break;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line[0] == '!') continue;  // comment / reference record

    auto toks = split_tabs(line);

    if (line[0] == '*') {
      if (toks[0].starts_with("**")) {
        if (spines != 0) throw ParseError(line_no, "duplicate exclusive interpretation row");
        spines = int(toks.size());
        result.score.parts.resize(size_t(spines));
        pending.resize(size_t(spines));
        clock.assign(size_t(spines), Rational(0));
        continue;
      }
      if (spines == 0) throw ParseError(line_no, "interpretation before spine declaration");
      if (int(toks.size()) != spines)
        throw ParseError(line_no, "inconsistent spine count: got " +
                                      std::to_string(toks.size()) + ", expected " +
                                      std::to_string(spines));
      if (toks[0] == "*-") {
        close_measure();
        terminated = true;
        continue;
      }
      if (toks[0] == "*^" || toks[0] == "*v")
        result.warnings.push_back("line " + std::to_string(line_no) +
                                  ": spine reorganization not supported, row skipped");
      continue;  // tandem interpretations carry no events
    }

    if (spines == 0) throw ParseError(line_no, "data before spine declaration");
    if (terminated) throw ParseError(line_no, "data after spine terminator");
    if (int(toks.size()) != spines)
      throw ParseError(line_no, "inconsistent spine count: got " + std::to_string(toks.size()) +
                                    ", expected " + std::to_string(spines));

    if (line[0] == '=') {
      close_measure();
      continue;
    }

    bool warned = false;
    {
      // New onsets on one row should be simultaneous in well-formed input.
      bool first = true, aligned = true;
      Rational ref(0);
      for (int s = 0; s < spines; ++s) {
        if (toks[size_t(s)] == "." || toks[size_t(s)].empty()) continue;
        if (first) {
          ref = clock[size_t(s)];
          first = false;
        } else if (clock[size_t(s)] != ref) {
          aligned = false;
        }
      }
      if (!aligned) {
        result.warnings.push_back("line " + std::to_string(line_no) +
                                  ": spine onsets misaligned, durations taken as written");
        warned = true;
      }
    }
    for (int s = 0; s < spines; ++s) {
      std::string_view tok = toks[size_t(s)];
      if (tok == "." || tok.empty()) continue;
      if (!subset_chars_only(tok)) {
        if (!warned) {
          result.warnings.push_back("line " + std::to_string(line_no) + ": token '" +
                                    std::string(tok) + "' outside the kern subset, skipped");
          warned = true;
        }
        // Keep the spine clock sane when the unsupported token still carries
        // a readable duration (ties, slurs, ornaments around a plain note).
        size_t d0 = tok.find_first_of("0123456789");
        if (d0 != std::string_view::npos) {
          size_t d1 = d0;
          while (d1 < tok.size() && std::isdigit(static_cast<unsigned char>(tok[d1]))) ++d1;
          long long digits = 0;
          for (size_t j = d0; j < d1; ++j) digits = digits * 10 + (tok[j] - '0');
          if (digits == 1 || digits == 2 || digits == 4 || digits == 8 || digits == 16) {
            Rational dur(4, digits);
            if (d1 < tok.size() && tok[d1] == '.') dur *= Rational(3, 2);
            clock[size_t(s)] += dur;
          }
        }
        continue;
      }
      Token parsed = parse_token(tok, line_no);
      NoteEvent ev;
      ev.onset = clock[size_t(s)];
      ev.duration = parsed.duration;
      ev.pitch = parsed.pitch;
      pending[size_t(s)].push_back(ev);
      clock[size_t(s)] += parsed.duration;
    }
  }

  close_measure();
  if (spines == 0) throw ParseError(line_no, "no spine declaration found");
  return result;
}

}  // namespace recomp
