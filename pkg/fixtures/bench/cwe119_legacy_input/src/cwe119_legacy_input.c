/* Compatibility shim retained for the legacy_parser input path.
 * CWE-119: the legacy record body is copied with its self-declared size. */
#include <string.h>

void legacy_parser(char *out, const char *record) {
    unsigned char body_len = (unsigned char)record[0];
    memcpy(out, record + 1, body_len);
}
