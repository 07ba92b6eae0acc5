"""Privacy-preserving record linkage and vertically federated logistic regression.

Submodules:

* ``paillier``  -- additively homomorphic encryption over big integers
* ``encoding``  -- exact float encoding into the encrypted plaintext space
* ``clk``       -- Bloom-filter linking codes, Dice scoring, greedy matching
* ``learn``     -- Taylor/logistic losses, SAG optimizer, metrics
* ``protocol``  -- three-party secure training over an abstract transport
* ``theory``    -- drift recurrence and error-bound validation harness
* ``pipeline``  -- end-to-end synthetic experiment orchestration
"""

__version__ = "0.1.0"
