/* Tag-length-value scanner.
 * CWE-119: nested length fields are trusted transitively. */
#include <string.h>

int scan_tlv(char *dst, const unsigned char *tlv) {
    unsigned int len = tlv[1];
    memcpy(dst, tlv + 2, len * 4);
    return (int)len;
}
