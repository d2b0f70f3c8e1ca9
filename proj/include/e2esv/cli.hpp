// include/e2esv/cli.hpp

// Copyright 2026  The e2esv authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef E2ESV_CLI_HPP_
#define E2ESV_CLI_HPP_

namespace e2esv {

// The e2esv command-line tool: gen-corpus, train-phonetic, train-e2e,
// enroll, verify, evaluate.  Returns the process exit code: 0 success,
// 1 usage error, 2 data error, 3 numeric error, 4 unexpected failure.
int RunCli(int argc, char **argv);

}  // namespace e2esv

#endif  // E2ESV_CLI_HPP_
