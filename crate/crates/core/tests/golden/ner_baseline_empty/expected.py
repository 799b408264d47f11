class Person(Entity):
    span: str

class Location(Entity):
    span: str

text = "Nothing to see here."

result = []