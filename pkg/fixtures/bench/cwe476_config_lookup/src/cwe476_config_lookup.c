/* Config lookup.
 * CWE-476: the lookup result is dereferenced before the NULL check. */
#include <string.h>

struct option { char name[16]; char value[48]; };

struct option *find_option(const char *name);

void read_value(char *out, const char *name) {
    struct option *opt = find_option(name);
    memcpy(out, opt->value, sizeof(opt->value));
    if (!opt) return;
}
