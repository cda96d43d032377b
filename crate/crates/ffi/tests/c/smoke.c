#include <stdio.h>
#include <string.h>

#include "spikegraph.h"

static const char *CONFIG =
    "neurons = [1, 2]\n"
    "horizon = 2000.0\n"
    "[[edges]]\nfrom = 2\nto = 1\nweight = 1.0\n"
    "[rate.default]\nkind = \"clipped-affine\"\n"
    "intercept = 0.75\nslope = 0.25\nfloor = 0.75\nceiling = 1.0\n";

#define CHECK(call)                                                      \
    do {                                                                 \
        SgStatus s_ = (call);                                            \
        if (s_ != SG_OK) {                                               \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,      \
                    sg_last_error() ? sg_last_error() : "?");            \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    SgNetwork *net = NULL;
    SgRecording *rec = NULL;
    SgReport *report = NULL;
    char *json = NULL;
    SgPair pair;

    CHECK(sg_network_from_toml(CONFIG, &net));
    if (sg_network_len(net) != 2) return 2;
    CHECK(sg_simulate(net, 0.0, 5, &rec));
    if (sg_recording_spike_count(rec) == 0) return 3;
    CHECK(sg_estimate(rec, net, 0.01, 1, &report));
    if (sg_report_pair_count(report) != 2) return 4;
    CHECK(sg_report_pair(report, 0, &pair));
    CHECK(sg_report_to_json(report, &json));
    if (strstr(json, "\"pairs\"") == NULL) return 5;

    if (sg_report_pair(report, 99, &pair) != SG_INVALID_ARGUMENT) return 6;
    if (sg_last_error() == NULL) return 7;
    if (sg_network_from_toml(NULL, &net) != SG_NULL_POINTER) return 8;

    printf("ok %s %u->%u\n", sg_version(), pair.from, pair.to);
    sg_string_free(json);
    sg_report_free(report);
    sg_recording_free(rec);
    sg_network_free(net);
    return 0;
}
