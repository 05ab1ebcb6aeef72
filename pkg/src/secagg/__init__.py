"""Secure aggregation with interchangeable protection mechanisms.

Parties hold private datasets; an aggregator wants the sum (or count,
or average) of a per-party query. Each node independently picks its
protection: a threshold additively homomorphic scheme on the crypto
path, or a simulated trusted execution environment. Confidential
queries reach crypto parties through 1-of-k oblivious transfer and TEE
parties through hybrid encryption to the enclave.

Modules: group (named prime-order groups), thfhe (threshold AHE),
ot (1-of-k oblivious transfer), tee (simulated enclaves), datastore
(data and queries), transport (framing and channels), protocol (config
and round engine), bench (measurement harness), cli (entry point).
"""

__version__ = "0.1.0"
