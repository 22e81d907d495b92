/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SEETHROUGH_ERROR_HPP_
#define SEETHROUGH_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace seethrough {

enum class Errc {
    InvalidRate,
    InvalidWindow,
    WindowOverflow,
    InvalidGeometry,
    InvalidParticipant,
    DuplicateId,
    TooFew,
    UnknownParticipant,
    SlotOutOfRange,
    SelfGaze,
    NonMonotonicTime,
    UnsortedTrace,
    DuplicateJoin,
    SessionFull,
    InvalidMessage,
    InvalidScenario,
    InvalidLog,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidRate: return "InvalidRate";
        case Errc::InvalidWindow: return "InvalidWindow";
        case Errc::WindowOverflow: return "WindowOverflow";
        case Errc::InvalidGeometry: return "InvalidGeometry";
        case Errc::InvalidParticipant: return "InvalidParticipant";
        case Errc::DuplicateId: return "DuplicateId";
        case Errc::TooFew: return "TooFew";
        case Errc::UnknownParticipant: return "UnknownParticipant";
        case Errc::SlotOutOfRange: return "SlotOutOfRange";
        case Errc::SelfGaze: return "SelfGaze";
        case Errc::NonMonotonicTime: return "NonMonotonicTime";
        case Errc::UnsortedTrace: return "UnsortedTrace";
        case Errc::DuplicateJoin: return "DuplicateJoin";
        case Errc::SessionFull: return "SessionFull";
        case Errc::InvalidMessage: return "InvalidMessage";
        case Errc::InvalidScenario: return "InvalidScenario";
        case Errc::InvalidLog: return "InvalidLog";
    }
    return "Unknown";
}

/// All library failures surface as this exception; `code()` is stable and
/// is what the wire protocol reports in ERROR payloads.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace seethrough

#endif  // SEETHROUGH_ERROR_HPP_
