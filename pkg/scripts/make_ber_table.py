"""Regenerate the default coded-BER lookup table shipped with the package.

BPSK with the K=7 (133, 171) rate-1/2 convolutional code, soft-decision
Viterbi decoding over AWGN, approximated by the truncated union bound
    Pb <= sum_d c_d Q(sqrt(2 d Ec/N0))
with the first four distance-spectrum terms. The in-band SNR is taken as
Ec/N0 (one coded BPSK bit per subcarrier symbol). Values are capped at 0.5.

    python3 scripts/make_ber_table.py > src/wbwf/data/ber_bpsk_r12_awgn.csv
"""

import math

import numpy as np

SPECTRUM = {10: 36, 12: 211, 14: 1404, 16: 11633}


def q(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def coded_ber(snr_db):
    ec_n0 = 10.0 ** (snr_db / 10.0)
    pb = sum(c * q(math.sqrt(2.0 * d * ec_n0)) for d, c in SPECTRUM.items())
    return min(pb, 0.5)


def main():
    print("snr_db,ber")
    for snr in np.arange(-6.0, 12.01, 0.5):
        print(f"{snr:.1f},{coded_ber(snr):.6e}")


if __name__ == "__main__":
    main()
