#include "sightline/tts_client.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "sightline/error.hpp"

namespace sightline {

namespace {

constexpr std::array<std::string_view, 20> kOnes = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
constexpr std::array<std::string_view, 10> kTens = {"",      "",      "twenty",  "thirty", "forty",
                                                    "fifty", "sixty", "seventy", "eighty", "ninety"};

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

void append_word(std::string& out, std::string_view word) {
  if (!out.empty()) out += ' ';
  out += word;
}

std::string digit_by_digit(std::string_view digits) {
  std::string out;
  for (char c : digits) append_word(out, kOnes[static_cast<std::size_t>(c - '0')]);
  return out;
}

std::string spell_digit_run(std::string_view digits) {
  // "007" and very long runs read better digit by digit.
  if (digits.size() > 4 || (digits.size() > 1 && digits.front() == '0')) return digit_by_digit(digits);
  return spell_integer(std::stoi(std::string(digits)));
}

}  // namespace

void Prosody::validate() const {
  if (!(pitch_shift_semitones >= -12.0 && pitch_shift_semitones <= 12.0)) {
    throw Error(Errc::InvalidProsody, fmt::format("pitch shift {} outside [-12, 12]", pitch_shift_semitones));
  }
  if (!(rate_factor > 0.5 && rate_factor <= 2.0)) {
    throw Error(Errc::InvalidProsody, fmt::format("rate factor {} outside (0.5, 2.0]", rate_factor));
  }
  if (!(amplitude_gain > 0.0 && amplitude_gain <= 2.0)) {
    throw Error(Errc::InvalidProsody, fmt::format("amplitude gain {} outside (0, 2.0]", amplitude_gain));
  }
}

std::string spell_integer(int n) {
  if (n < 0 || n > 9999) throw Error(Errc::NonPositiveInput, fmt::format("{} outside 0..9999", n));
  if (n < 20) return std::string(kOnes[static_cast<std::size_t>(n)]);
  if (n < 100) {
    std::string s(kTens[static_cast<std::size_t>(n / 10)]);
    if (n % 10 != 0) s += fmt::format("-{}", kOnes[static_cast<std::size_t>(n % 10)]);
    return s;
  }
  const bool thousands = n >= 1000;
  const int unit = thousands ? 1000 : 100;
  std::string s = fmt::format("{} {}", kOnes[static_cast<std::size_t>(n / unit)], thousands ? "thousand" : "hundred");
  if (n % unit != 0) s += " " + spell_integer(n % unit);
  return s;
}

std::string normalize_text(std::string_view raw) {
  if (raw.empty()) throw Error(Errc::EmptyText, "nothing to normalize");

  std::string out;
  out.reserve(raw.size() * 2);
  std::size_t i = 0;
  while (i < raw.size()) {
    if (!is_digit(raw[i])) {
      out += raw[i++];
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && is_digit(raw[j])) ++j;
    std::string spoken = spell_digit_run(raw.substr(i, j - i));
    if (j + 1 < raw.size() && raw[j] == '.' && is_digit(raw[j + 1])) {
      std::size_t k = j + 1;
      while (k < raw.size() && is_digit(raw[k])) ++k;
      spoken += " point " + digit_by_digit(raw.substr(j + 1, k - j - 1));
      j = k;
    }
    out += spoken;

    // A lone "m" right after the number, with or without a space, is meters.
    std::size_t u = j;
    while (u < raw.size() && raw[u] == ' ') ++u;
    if (u < raw.size() && raw[u] == 'm' && (u + 1 == raw.size() || !is_alnum(raw[u + 1]))) {
      out += " meters";
      j = u + 1;
    } else if (j < raw.size() && is_alpha(raw[j])) {
      out += ' ';
    }
    i = j;
  }
  return out;
}

std::string build_request(std::string_view text, int speaker_id, const Prosody& prosody) {
  if (speaker_id < 0 || speaker_id >= kSpeakerCount) {
    throw Error(Errc::SpeakerOutOfRange, fmt::format("speaker id {} outside 0..{}", speaker_id, kSpeakerCount - 1));
  }
  if (text.empty()) throw Error(Errc::EmptyText, "utterance text is empty");
  if (std::any_of(text.begin(), text.end(), is_digit)) {
    throw Error(Errc::TextNotNormalized, fmt::format("text still contains digits: \"{}\"", text));
  }
  prosody.validate();

  using nlohmann::json;
  return fmt::format(R"({{"text": {}, "speaker_id": {}, "prosody": {{"pitch": {}, "rate": {}, "amplitude": {}}}}})",
                     json(std::string(text)).dump(), speaker_id, json(prosody.pitch_shift_semitones).dump(),
                     json(prosody.rate_factor).dump(), json(prosody.amplitude_gain).dump());
}

std::int64_t parse_ack(std::string_view body) {
  auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::MalformedAck, "acknowledgment is not a JSON object");
  auto it = j.find("duration_ms");
  if (it == j.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw Error(Errc::MalformedAck, "acknowledgment lacks a non-negative integer duration_ms");
  }
  return it->get<std::int64_t>();
}

HttpTtsTransport::HttpTtsTransport(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

std::int64_t HttpTtsTransport::send(const std::string& body) {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  auto res = cli.Post("/speak", body, "application/json");
  if (!res) {
    throw Error(Errc::TtsUnreachable,
                fmt::format("POST {}/speak failed: {}", base_url_, httplib::to_string(res.error())));
  }
  if (res->status != 200) throw Error(Errc::MalformedAck, fmt::format("TTS answered HTTP {}", res->status));
  return parse_ack(res->body);
}

bool FreshestWinsQueue::offer(Utterance u) {
  const bool replaced = pending_.has_value();
  pending_ = std::move(u);
  return replaced;
}

std::optional<Utterance> FreshestWinsQueue::take() {
  auto u = std::move(pending_);
  pending_.reset();
  return u;
}

SpeakAck SpeechDispatcher::send(const Utterance& u) {
  try {
    const auto duration = transport_.send(build_request(u.text, u.speaker_id, u.prosody));
    ++stats_.sent;
    busy_until_ms_ = clock_.now_ms() + duration;
    return SpeakAck{duration};
  } catch (const Error& e) {
    ++stats_.failed;
    stats_.last_error = e.what();
    throw;
  }
}

std::optional<SpeakAck> SpeechDispatcher::enqueue_speak(Utterance u) {
  if (queue_.offer(std::move(u))) ++stats_.replaced;
  return pump();
}

std::optional<SpeakAck> SpeechDispatcher::pump() {
  if (!queue_.has_pending() || busy()) return std::nullopt;
  auto u = queue_.take();
  return send(*u);
}

void SpeechDispatcher::drain() {
  while (queue_.has_pending()) {
    clock_.sleep_until(busy_until_ms_);
    pump();
  }
  clock_.sleep_until(busy_until_ms_);
}

AsyncSpeechDispatcher::AsyncSpeechDispatcher(TtsTransport& transport)
    : transport_(transport), worker_([this] { run(); }) {}

AsyncSpeechDispatcher::~AsyncSpeechDispatcher() { stop(); }

void AsyncSpeechDispatcher::enqueue_speak(Utterance u) {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    if (queue_.offer(std::move(u))) ++stats_.replaced;
  }
  cv_.notify_all();
}

void AsyncSpeechDispatcher::wait_idle() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return stopping_ || (!active_ && !queue_.has_pending()); });
}

void AsyncSpeechDispatcher::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    queue_.clear();
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

DispatchStats AsyncSpeechDispatcher::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void AsyncSpeechDispatcher::run() {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait(lock, [this] { return stopping_ || queue_.has_pending(); });
    if (stopping_) return;
    const Utterance u = *queue_.take();
    active_ = true;
    lock.unlock();

    std::int64_t duration = 0;
    std::string error;
    try {
      duration = transport_.send(build_request(u.text, u.speaker_id, u.prosody));
    } catch (const std::exception& e) {
      error = e.what();
    }

    lock.lock();
    if (error.empty()) {
      ++stats_.sent;
    } else {
      ++stats_.failed;
      stats_.last_error = error;
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(duration);
    cv_.wait_until(lock, deadline, [this] { return stopping_; });
    active_ = false;
    cv_.notify_all();
  }
}

}  // namespace sightline
