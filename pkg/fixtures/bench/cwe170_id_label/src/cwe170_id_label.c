/* Identifier labels.
 * CWE-170: the assembled label is not NUL-terminated on the full-buffer path. */
#include <stdio.h>
#include <string.h>

void format_label(char *label, const char *id) {
    sprintf(label, "id-%s", id);
}
