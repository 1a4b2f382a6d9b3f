from hypothesis import settings

settings.register_profile("specdesk", deadline=None, max_examples=50)
settings.load_profile("specdesk")
