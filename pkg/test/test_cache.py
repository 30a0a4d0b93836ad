import unittest

from memformer_lfom import cache


class TestRunCache(unittest.TestCase):
    def setUp(self):
        self.test_db = cache.init_test_db()

    def tearDown(self):
        # Clean up
        cache.clean_test_db(self.test_db)

    def test_basic_set_get(self):
        """Test basic set and get operations"""
        cache_instance = cache.RunCache({"variant": "memformer_lfom"})

        # Test get with non-existent entry
        self.assertIsNone(cache_instance.get(0))

        cache_instance.set(0, '{"run": 0}')
        self.assertEqual(cache_instance.get(0), '{"run": 0}')
        self.assertIsNone(cache_instance.get(1))

    def test_cache_overwrite(self):
        """Test that a run can be stored again under the same key"""
        cache_instance = cache.RunCache({"variant": "linear_tf"})

        cache_instance.set(3, "first")
        cache_instance.set(3, "second")

        self.assertEqual(cache_instance.get(3), "second")

    def test_params_key_order_does_not_matter(self):
        """Test that nested params are sorted before being used as key"""
        first = cache.RunCache({"train": {"lr": 0.001, "steps": 10}, "seed": 1})
        second = cache.RunCache({"seed": 1, "train": {"steps": 10, "lr": 0.001}})

        first.set(0, "record")
        self.assertEqual(second.get(0), "record")

    def test_params_distinction(self):
        """Test that different settings do not share runs"""
        cache_a = cache.RunCache({"seed": 1})
        cache_b = cache.RunCache({"seed": 2})

        cache_a.set(0, "a")
        cache_b.set(0, "b")

        self.assertEqual(cache_a.get(0), "a")
        self.assertEqual(cache_b.get(0), "b")

    def test_empty_params(self):
        """Test that no params is a valid key"""
        cache_instance = cache.RunCache()
        cache_instance.set(2, "record")
        self.assertEqual(cache.RunCache({}).get(2), "record")


if __name__ == "__main__":
    unittest.main()
