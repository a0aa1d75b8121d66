#include "molerase/schedule.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace molerase {

namespace {

constexpr double kPi = 3.14159265358979324;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

struct Token {
  std::string text;
  int col = 0;
};

std::vector<Token> tokenize(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    if (line[i] == '#') break;
    std::size_t j = i;
    while (j < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[j])) &&
           line[j] != '#') {
      ++j;
    }
    out.push_back({line.substr(i, j - i), static_cast<int>(i + 1)});
    i = j;
  }
  return out;
}

[[noreturn]] void fail(ParseErrorCode code, int line, int col,
                       const std::string& msg) {
  throw ParseError(code, line, col, msg);
}

double parse_number(const Token& tok, int line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok.text, &pos);
    if (pos != tok.text.size()) throw std::invalid_argument("trail");
    return v;
  } catch (const std::exception&) {
    fail(ParseErrorCode::BadValue, line, tok.col,
         "expected a number, got '" + tok.text + "'");
  }
}

double parse_duration(const Token& tok, int line) {
  std::string t = lower(tok.text);
  double scale = 1.0;
  if (t.size() > 2 && t.compare(t.size() - 2, 2, "us") == 0) {
    scale = 1e-6;
    t.resize(t.size() - 2);
  } else if (t.size() > 2 && t.compare(t.size() - 2, 2, "ms") == 0) {
    scale = 1e-3;
    t.resize(t.size() - 2);
  } else if (t.size() > 1 && t.back() == 's') {
    t.resize(t.size() - 1);
  }
  try {
    std::size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument("trail");
    if (v < 0) throw std::invalid_argument("negative");
    return v * scale;
  } catch (const std::exception&) {
    fail(ParseErrorCode::BadValue, line, tok.col,
         "expected a duration (e.g. 5ms), got '" + tok.text + "'");
  }
}

// Radians, or fractions of pi: pi, -pi/2, 3pi/2, 0.5pi.
double parse_angle(const Token& tok, int line) {
  std::string t = lower(tok.text);
  std::size_t at = t.find("pi");
  if (at == std::string::npos) return parse_number(tok, line);
  double sign = 1.0;
  std::string head = t.substr(0, at);
  std::string tail = t.substr(at + 2);
  if (head == "-") {
    sign = -1.0;
    head.clear();
  }
  double num = 1.0;
  double den = 1.0;
  try {
    if (!head.empty()) num = std::stod(head);
    if (!tail.empty()) {
      if (tail[0] != '/') throw std::invalid_argument("bad tail");
      den = std::stod(tail.substr(1));
    }
  } catch (const std::exception&) {
    fail(ParseErrorCode::BadValue, line, tok.col,
         "bad angle '" + tok.text + "'");
  }
  return sign * num * kPi / den;
}

StateBin parse_bin(const Token& tok, int line) {
  try {
    return bin_from_name(upper(tok.text));
  } catch (const CatalogError&) {
    fail(ParseErrorCode::BadValue, line, tok.col,
         "unknown state bin '" + tok.text + "'");
  }
}

void require_arity(const std::vector<Token>& toks, std::size_t lo,
                   std::size_t hi, int line) {
  std::size_t args = toks.size() - 1;
  if (args < lo || args > hi) {
    fail(ParseErrorCode::ArityMismatch, line, toks[0].col,
         "'" + toks[0].text + "' takes " + std::to_string(lo) +
             (hi != lo ? ".." + std::to_string(hi) : "") + " arguments, got " +
             std::to_string(args));
  }
}

std::string format_duration(double seconds) {
  std::ostringstream os;
  if (seconds == 0.0 || seconds >= 1.0) {
    os << seconds << "s";
  } else if (seconds >= 1e-3) {
    os << seconds * 1e3 << "ms";
  } else {
    os << seconds * 1e6 << "us";
  }
  return os.str();
}

std::string format_angle(double rad) {
  double frac = rad / kPi;
  std::ostringstream os;
  for (int den = 1; den <= 8; ++den) {
    double num = frac * den;
    if (std::abs(num - std::round(num)) < 1e-12 && std::round(num) != 0.0) {
      int n = static_cast<int>(std::round(num));
      if (n == 1 && den == 1) return "pi";
      if (n == -1 && den == 1) return "-pi";
      os << n << "pi";
      if (den > 1) os << "/" << den;
      return os.str();
    }
  }
  if (rad == 0.0) return "0";
  os << rad;
  return os.str();
}

}  // namespace

ParseError::ParseError(ParseErrorCode c, int l, int co, const std::string& m)
    : std::runtime_error("line " + std::to_string(l) + ":" +
                         std::to_string(co) + ": " + m),
      code(c),
      line(l),
      col(co) {}

int Schedule::n_sites() const {
  for (const Step& s : steps) {
    if (const auto* load = std::get_if<LoadStep>(&s)) return load->n_sites;
  }
  return 0;
}

std::vector<int> Schedule::flag_steps() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (const auto* img = std::get_if<ImageStep>(&steps[i])) {
      if (img->kind == ImageKind::Error) out.push_back(static_cast<int>(i));
    } else if (const auto* comp = std::get_if<CompositeStep>(&steps[i])) {
      if (comp->include_image) out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

bool Schedule::has_qubit_steps() const {
  auto qubit_bin = [](StateBin b) {
    return b == StateBin::QDown || b == StateBin::QZero ||
           b == StateBin::Qubit;
  };
  for (const Step& s : steps) {
    if (std::holds_alternative<RamanStep>(s) ||
        std::holds_alternative<CompositeStep>(s)) {
      return true;
    }
    if (const auto* mw = std::get_if<MicrowaveStep>(&s)) {
      if (qubit_bin(mw->source) || qubit_bin(mw->dest)) return true;
    }
    if (const auto* meas = std::get_if<MeasureStep>(&s)) {
      if (qubit_bin(meas->target)) return true;
    }
  }
  return false;
}

Schedule parse_script(const std::string& text) {
  Schedule sched;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool saw_terminal = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::vector<Token> toks = tokenize(raw);
    if (toks.empty()) continue;
    std::string kw = lower(toks[0].text);
    int col = toks[0].col;

    if (saw_terminal) {
      fail(ParseErrorCode::InvariantViolation, line_no, col,
           "destructive image / measure must be the last step");
    }
    if (sched.steps.empty() && kw != "load") {
      fail(ParseErrorCode::InvariantViolation, line_no, col,
           "schedule must start with 'load'");
    }

    if (kw == "load") {
      if (!sched.steps.empty()) {
        fail(ParseErrorCode::InvariantViolation, line_no, col,
             "'load' must appear exactly once, first");
      }
      require_arity(toks, 2, 2, line_no);
      LoadStep s;
      double n = parse_number(toks[1], line_no);
      if (n < 1 || n != std::floor(n)) {
        fail(ParseErrorCode::BadValue, line_no, toks[1].col,
             "site count must be a positive integer");
      }
      s.n_sites = static_cast<int>(n);
      s.fill_prob = parse_number(toks[2], line_no);
      if (s.fill_prob < 0 || s.fill_prob > 1) {
        fail(ParseErrorCode::BadValue, line_no, toks[2].col,
             "fill probability outside [0,1]");
      }
      sched.steps.emplace_back(s);
    } else if (kw == "image") {
      require_arity(toks, 1, 2, line_no);
      ImageStep s;
      std::string kind = lower(toks[1].text);
      if (kind == "nondestructive") {
        s.kind = ImageKind::Nondestructive;
      } else if (kind == "error") {
        s.kind = ImageKind::Error;
      } else if (kind == "destructive") {
        s.kind = ImageKind::Destructive;
        saw_terminal = true;
      } else {
        fail(ParseErrorCode::BadValue, line_no, toks[1].col,
             "image kind must be nondestructive|error|destructive");
      }
      if (toks.size() > 2) {
        std::string opt = lower(toks[2].text);
        if (opt.rfind("theta=", 0) == 0) {
          s.theta = parse_number({opt.substr(6), toks[2].col}, line_no);
        } else {
          fail(ParseErrorCode::BadValue, line_no, toks[2].col,
               "unknown image option '" + toks[2].text + "'");
        }
      }
      sched.steps.emplace_back(s);
    } else if (kw == "pump") {
      require_arity(toks, 1, 1, line_no);
      sched.steps.emplace_back(PumpStep{parse_duration(toks[1], line_no)});
    } else if (kw == "microwave") {
      require_arity(toks, 3, 3, line_no);
      MicrowaveStep s;
      s.fidelity = parse_number(toks[1], line_no);
      if (s.fidelity < 0 || s.fidelity > 1) {
        fail(ParseErrorCode::BadValue, line_no, toks[1].col,
             "fidelity outside [0,1]");
      }
      s.source = parse_bin(toks[2], line_no);
      s.dest = parse_bin(toks[3], line_no);
      if (s.source == s.dest) {
        fail(ParseErrorCode::InvariantViolation, line_no, toks[3].col,
             "microwave source equals destination");
      }
      sched.steps.emplace_back(s);
    } else if (kw == "raman") {
      require_arity(toks, 3, 3, line_no);
      RamanStep s;
      s.scheme = lower(toks[1].text);
      if (s.scheme != "xb" && s.scheme != "xa-current" &&
          s.scheme != "xa-optimal") {
        fail(ParseErrorCode::BadValue, line_no, toks[1].col,
             "unknown Raman scheme '" + toks[1].text + "'");
      }
      s.angle = parse_angle(toks[2], line_no);
      s.axis_phase = parse_angle(toks[3], line_no);
      sched.steps.emplace_back(s);
    } else if (kw == "composite_detect") {
      require_arity(toks, 1, 2, line_no);
      CompositeStep s;
      s.scheme = lower(toks[1].text);
      if (s.scheme == "xa-current") {
        fail(ParseErrorCode::InvariantViolation, line_no, toks[1].col,
             "composite detection is incompatible with a scheme resonant "
             "with the detection manifold (xa-current)");
      }
      if (s.scheme != "xb" && s.scheme != "xa-optimal") {
        fail(ParseErrorCode::BadValue, line_no, toks[1].col,
             "unknown Raman scheme '" + toks[1].text + "'");
      }
      if (toks.size() > 2) {
        if (lower(toks[2].text) == "noimage") {
          s.include_image = false;
        } else {
          fail(ParseErrorCode::BadValue, line_no, toks[2].col,
               "unknown composite option '" + toks[2].text + "'");
        }
      }
      sched.steps.emplace_back(s);
    } else if (kw == "hold") {
      require_arity(toks, 1, 2, line_no);
      HoldStep s;
      s.duration = parse_duration(toks[1], line_no);
      if (toks.size() > 2) {
        std::string opt = lower(toks[2].text);
        if (opt.rfind("repump=", 0) == 0) {
          double period =
              parse_duration({opt.substr(7), toks[2].col}, line_no);
          if (period <= 0) {
            fail(ParseErrorCode::BadValue, line_no, toks[2].col,
                 "repump period must be positive");
          }
          s.repump_period = period;
        } else {
          fail(ParseErrorCode::BadValue, line_no, toks[2].col,
               "unknown hold option '" + toks[2].text + "'");
        }
      }
      sched.steps.emplace_back(s);
    } else if (kw == "ramp") {
      require_arity(toks, 1, 1, line_no);
      double d = parse_number(toks[1], line_no);
      if (d <= 0) {
        fail(ParseErrorCode::BadValue, line_no, toks[1].col,
             "depth must be positive (uK)");
      }
      sched.steps.emplace_back(RampStep{d});
    } else if (kw == "convert") {
      require_arity(toks, 0, 0, line_no);
      sched.steps.emplace_back(ConvertStep{});
    } else if (kw == "measure") {
      require_arity(toks, 1, 1, line_no);
      sched.steps.emplace_back(MeasureStep{parse_bin(toks[1], line_no)});
      saw_terminal = true;
    } else {
      fail(ParseErrorCode::UnknownPrimitive, line_no, col,
           "unknown primitive '" + toks[0].text + "'");
    }
  }
  if (sched.steps.empty()) {
    fail(ParseErrorCode::EmptySchedule, line_no, 1, "empty schedule");
  }
  return sched;
}

std::string print_script(const Schedule& schedule) {
  std::ostringstream os;
  for (const Step& step : schedule.steps) {
    std::visit(
        [&os](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, LoadStep>) {
            os << "load " << s.n_sites << " " << s.fill_prob;
          } else if constexpr (std::is_same_v<T, ImageStep>) {
            os << "image ";
            switch (s.kind) {
              case ImageKind::Nondestructive: os << "nondestructive"; break;
              case ImageKind::Error: os << "error"; break;
              case ImageKind::Destructive: os << "destructive"; break;
            }
            if (s.theta) os << " theta=" << *s.theta;
          } else if constexpr (std::is_same_v<T, PumpStep>) {
            os << "pump " << format_duration(s.duration);
          } else if constexpr (std::is_same_v<T, MicrowaveStep>) {
            os << "microwave " << s.fidelity << " " << bin_name(s.source)
               << " " << bin_name(s.dest);
          } else if constexpr (std::is_same_v<T, RamanStep>) {
            os << "raman " << s.scheme << " " << format_angle(s.angle) << " "
               << format_angle(s.axis_phase);
          } else if constexpr (std::is_same_v<T, CompositeStep>) {
            os << "composite_detect " << s.scheme
               << (s.include_image ? "" : " noimage");
          } else if constexpr (std::is_same_v<T, HoldStep>) {
            os << "hold " << format_duration(s.duration);
            if (s.repump_period) {
              os << " repump=" << format_duration(*s.repump_period);
            }
          } else if constexpr (std::is_same_v<T, RampStep>) {
            os << "ramp " << s.depth_uk;
          } else if constexpr (std::is_same_v<T, ConvertStep>) {
            os << "convert";
          } else if constexpr (std::is_same_v<T, MeasureStep>) {
            os << "measure " << bin_name(s.target);
          }
        },
        step);
    os << "\n";
  }
  return os.str();
}

std::vector<std::string> validate_schedule(const Schedule& schedule,
                                           const PhysicsParams& p) {
  std::vector<std::string> warnings;
  double decay_time = 1.0 / p.gamma_bb_10;
  double depth = p.depth_ed;  // sequences begin at the imaging depth
  for (std::size_t i = 0; i < schedule.steps.size(); ++i) {
    const Step& step = schedule.steps[i];
    if (const auto* hold = std::get_if<HoldStep>(&step)) {
      if (!hold->repump_period && hold->duration > decay_time) {
        warnings.push_back(
            "step " + std::to_string(i) + ": hold of " +
            std::to_string(hold->duration) +
            " s without erasure conversion; leaked population decays back "
            "within 1/Gamma_10 and becomes unconvertible");
      } else if (hold->repump_period && *hold->repump_period > decay_time) {
        warnings.push_back("step " + std::to_string(i) +
                           ": repump period exceeds the v=1 decay time; "
                           "conversion will miss most leakage");
      }
    } else if (const auto* ramp = std::get_if<RampStep>(&step)) {
      depth = ramp->depth_uk;
      if (i + 1 < schedule.steps.size() && depth < p.depth_ed &&
          std::holds_alternative<CompositeStep>(schedule.steps[i + 1])) {
        warnings.push_back("step " + std::to_string(i) +
                           ": detection below calibrated depth (ramp to " +
                           std::to_string(ramp->depth_uk) +
                           " uK directly before composite detection)");
      }
    } else if (const auto* img = std::get_if<ImageStep>(&step)) {
      if (img->kind == ImageKind::Error && depth < p.depth_ed) {
        warnings.push_back("step " + std::to_string(i) +
                           ": error image below the calibrated detection "
                           "depth");
      }
    }
  }
  return warnings;
}

}  // namespace molerase
