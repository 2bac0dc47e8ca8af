/* Minimal C client for the pintkit library.
 *
 * Build (from the workspace root, after `cargo build -p pintkit-ffi`):
 *   cc crates/ffi/examples/client.c \
 *      -Icrates/ffi/include \
 *      target/debug/libpintkit_ffi.a \
 *      -lpthread -ldl -lm -o client
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "pintkit.h"

static const char *CONFIG =
    "[system]\n"
    "name = \"linear\"\n"
    "d = 4\n"
    "lambda = -1.0\n"
    "\n"
    "[time]\n"
    "t_end = 1.0\n"
    "n_intervals = 8\n"
    "\n"
    "[solvers]\n"
    "coarse_method = \"rk1\"\n"
    "coarse_steps = 2\n"
    "fine_method = \"rk8\"\n"
    "fine_steps = 16\n"
    "\n"
    "[correction]\n"
    "model = \"parareal\"\n"
    "\n"
    "[run]\n"
    "epsilon = 1e-9\n";

static void fail(const char *where)
{
    char *message = pintkit_last_error_message();
    fprintf(stderr, "%s: %s\n", where, message ? message : "unknown error");
    pintkit_string_free(message);
    exit(1);
}

int main(void)
{
    printf("pintkit %s\n", pintkit_version());

    PintConfigHandle *config = NULL;
    if (pintkit_config_from_toml(CONFIG, &config) != PintStatusOk)
        fail("parse");

    PintReportHandle *report = NULL;
    if (pintkit_run(config, &report) != PintStatusOk)
        fail("run");

    const char *outcome =
        pintkit_report_outcome(report) == PintRunConverged ? "converged"
        : pintkit_report_outcome(report) == PintRunBudgetExhausted ? "budget exhausted"
                                                                   : "aborted";
    printf("outcome=%s iterations=%u\n", outcome, pintkit_report_iterations(report));

    char *json = NULL;
    if (pintkit_report_to_json(report, &json) != PintStatusOk)
        fail("serialize");
    printf("report bytes=%zu\n", strlen(json));

    pintkit_string_free(json);
    pintkit_report_free(report);
    pintkit_config_free(config);
    return 0;
}
